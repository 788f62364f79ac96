#pragma once

#include <optional>
#include <string>

#include "omfa/errors.hpp"
#include "omfa/tensor.hpp"

namespace omfa {

enum class Task { try_on, try_off };

enum class Component { person, pose, garment, head };

inline const char* task_name(Task t) { return t == Task::try_on ? "try_on" : "try_off"; }

// Half-open [x0,x1) column range in the joint latent.
struct Span {
    int x0 = 0, x1 = 0;
    int width() const { return x1 - x0; }
};

// Half-open channel range.
struct ChanRange {
    int c0 = 0, c1 = 0;
    int count() const { return c1 - c0; }
};

// Geometry of the spatially composed latent: three width-concatenated slots
// (person, garment, optional head), with the pose latent channel-concatenated
// into the person slot and one constant cue channel in the garment slot.
// The dense array carries dense_channels everywhere; slots that use fewer
// channels are zero-padded above their ranges.
struct ComponentLayout {
    int height = 0;
    int image_channels = 0;  // channels of one encoded image (3*f^2)
    Span person_span, garment_span;
    std::optional<Span> head_span;
    ChanRange person_channels, pose_channels;  // within the person slot
    ChanRange garment_channels;                // within the garment slot
    int cue_channel = 0;                       // within the garment slot
    ChanRange head_channels;                   // within the head slot
    int dense_channels = 0;

    static ComponentLayout make(int height, int person_w, int garment_w,
                                std::optional<int> head_w, int image_channels) {
        if (height <= 0 || person_w <= 0 || garment_w <= 0 || image_channels <= 0)
            throw ValidationError("layout dimensions must be positive");
        ComponentLayout l;
        l.height = height;
        l.image_channels = image_channels;
        l.person_span = {0, person_w};
        l.garment_span = {person_w, person_w + garment_w};
        if (head_w) {
            if (*head_w <= 0) throw ValidationError("head width must be positive");
            l.head_span = Span{l.garment_span.x1, l.garment_span.x1 + *head_w};
        }
        l.person_channels = {0, image_channels};
        l.pose_channels = {image_channels, 2 * image_channels};
        l.garment_channels = {0, image_channels};
        l.cue_channel = image_channels;
        l.head_channels = {0, image_channels};
        l.dense_channels = 2 * image_channels;
        return l;
    }

    int width() const { return head_span ? head_span->x1 : garment_span.x1; }

    bool operator==(const ComponentLayout&) const = default;
};

// Binary selector over the joint latent. Entries are exactly 0 or 1.
template <typename T>
struct ComponentMaskT {
    TensorT<T> data;

    void validate_binary() const {
        for (const T& x : data.v)
            if (x != T(0) && x != T(1)) throw ValidationError("mask entries must be 0 or 1");
    }
    std::size_t ones() const {
        std::size_t n = 0;
        for (const T& x : data.v) n += (x == T(1));
        return n;
    }
};

using ComponentMask = ComponentMaskT<float>;

template <typename T>
struct JointLatentT {
    TensorT<T> data;  // (dense_channels, height, width)
    ComponentLayout layout;
    Task task = Task::try_on;
};

using JointLatent = JointLatentT<float>;

namespace detail {
template <typename T>
void copy_block(TensorT<T>& dst, const TensorT<T>& src, int dst_c0, int dst_x0) {
    const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
    for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) dst.at(dst_c0 + ci, y, dst_x0 + x) = src.at(ci, y, x);
}
}  // namespace detail

// Compose the joint latent: channel-concat person||pose, width-concat
// [person-slot, garment, head]. A missing garment is a zero placeholder slot
// (the generation target for try-off); try-on requires the head latent.
// The garment slot always gets the constant background-cue channel (value 1).
template <typename T>
JointLatentT<T> assemble(const TensorT<T>& person_lat, const TensorT<T>& pose_lat,
                         const std::optional<TensorT<T>>& garment_lat,
                         const std::optional<TensorT<T>>& head_lat, Task task) {
    require_same_shape(person_lat, pose_lat, "person/pose latents");
    const int ic = person_lat.dim(0), h = person_lat.dim(1), pw = person_lat.dim(2);
    if (task == Task::try_on && !head_lat) throw ValidationError("try_on requires a head latent");

    int gw = pw, hw = pw;
    if (garment_lat) {
        if (garment_lat->dim(0) != ic || garment_lat->dim(1) != h)
            throw ShapeError("garment latent must share height/channels with person latent");
        gw = garment_lat->dim(2);
    }
    if (head_lat) {
        if (head_lat->dim(0) != ic || head_lat->dim(1) != h)
            throw ShapeError("head latent must share height/channels with person latent");
        hw = head_lat->dim(2);
    }

    ComponentLayout l = ComponentLayout::make(h, pw, gw, hw, ic);
    JointLatentT<T> joint;
    joint.layout = l;
    joint.task = task;
    joint.data = TensorT<T>({l.dense_channels, h, l.width()});

    detail::copy_block(joint.data, person_lat, l.person_channels.c0, l.person_span.x0);
    detail::copy_block(joint.data, pose_lat, l.pose_channels.c0, l.person_span.x0);
    if (garment_lat) detail::copy_block(joint.data, *garment_lat, l.garment_channels.c0, l.garment_span.x0);
    for (int y = 0; y < h; ++y)
        for (int x = l.garment_span.x0; x < l.garment_span.x1; ++x)
            joint.data.at(l.cue_channel, y, x) = T(1);
    if (head_lat) detail::copy_block(joint.data, *head_lat, l.head_channels.c0, l.head_span->x0);
    return joint;
}

// Task mask: M1 covers the person-image channels of the person slot (try-on),
// M2 the garment-image channels of the garment slot (try-off). Pose, cue and
// head entries are never selected.
template <typename T = float>
ComponentMaskT<T> make_mask(const ComponentLayout& l, Task task) {
    ComponentMaskT<T> m;
    m.data = TensorT<T>({l.dense_channels, l.height, l.width()});
    const Span span = (task == Task::try_on) ? l.person_span : l.garment_span;
    const ChanRange ch = (task == Task::try_on) ? l.person_channels : l.garment_channels;
    for (int c = ch.c0; c < ch.c1; ++c)
        for (int y = 0; y < l.height; ++y)
            for (int x = span.x0; x < span.x1; ++x) m.data.at(c, y, x) = T(1);
    return m;
}

// Extract one component as a latent grid. The person split drops the pose
// channels; the garment split drops the cue channel.
template <typename T>
TensorT<T> split(const JointLatentT<T>& joint, Component which) {
    const ComponentLayout& l = joint.layout;
    Span span;
    ChanRange ch;
    switch (which) {
        case Component::person: span = l.person_span; ch = l.person_channels; break;
        case Component::pose: span = l.person_span; ch = l.pose_channels; break;
        case Component::garment: span = l.garment_span; ch = l.garment_channels; break;
        case Component::head:
            if (!l.head_span) throw LookupError("joint latent has no head slot");
            span = *l.head_span;
            ch = l.head_channels;
            break;
    }
    TensorT<T> out({ch.count(), l.height, span.width()});
    for (int c = 0; c < ch.count(); ++c)
        for (int y = 0; y < l.height; ++y)
            for (int x = 0; x < span.width(); ++x)
                out.at(c, y, x) = joint.data.at(ch.c0 + c, y, span.x0 + x);
    return out;
}

}  // namespace omfa
