#pragma once

#include <cstdint>
#include <memory>

#include "core/graph.hpp"
#include "core/rng.hpp"

namespace plab {

// One sampled augmentation: horizontal flip, integer translation with zero
// fill, and a 7/8-side crop resized back with nearest neighbor. The whole
// chain collapses into a single index map, so it drops into a graph as one
// gather node and stays differentiable through its scatter-add adjoint.
struct AugSpec {
  bool flip = false;
  int dx = 0, dy = 0;  // translation, image content moves by (+dx, +dy)
  int crop_x = 0, crop_y = 0;

  bool operator==(const AugSpec&) const = default;
};

inline constexpr int kAugMaxShift = 4;
inline constexpr int kAugCropNum = 7;  // crop side = size * 7/8

// Draw order is part of the reproducibility contract: flip, dx, dy, crop_x,
// crop_y.
AugSpec draw_augmentation(Rng& rng, int size);

// Output-to-source flat index map over a [3, size, size] tensor; -1 entries
// produce zero fill.
std::shared_ptr<const IndexMap> make_aug_map(const AugSpec& spec, int size);

// Host-side application of the same map, for callers outside a graph.
Tensor apply_augmentation(const Tensor& image, const AugSpec& spec);

}  // namespace plab
