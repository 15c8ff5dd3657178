#include "craft/augment.hpp"

#include <stdexcept>

namespace plab {

AugSpec draw_augmentation(Rng& rng, int size) {
  if (size % 8 != 0) throw std::invalid_argument("augmentation needs a size divisible by 8");
  AugSpec s;
  s.flip = rng.bernoulli(0.5);
  s.dx = static_cast<int>(rng.below(2 * kAugMaxShift + 1)) - kAugMaxShift;
  s.dy = static_cast<int>(rng.below(2 * kAugMaxShift + 1)) - kAugMaxShift;
  int slack = size - size * kAugCropNum / 8;
  s.crop_x = static_cast<int>(rng.below(slack + 1));
  s.crop_y = static_cast<int>(rng.below(slack + 1));
  return s;
}

std::shared_ptr<const IndexMap> make_aug_map(const AugSpec& spec, int size) {
  if (size % 8 != 0) throw std::invalid_argument("augmentation needs a size divisible by 8");
  const int crop = size * kAugCropNum / 8;
  int slack = size - crop;
  if (spec.crop_x < 0 || spec.crop_x > slack || spec.crop_y < 0 || spec.crop_y > slack)
    throw std::invalid_argument("crop offset outside valid range");
  if (spec.dx < -kAugMaxShift || spec.dx > kAugMaxShift || spec.dy < -kAugMaxShift ||
      spec.dy > kAugMaxShift)
    throw std::invalid_argument("translation outside valid range");

  auto map = std::make_shared<IndexMap>(static_cast<std::size_t>(3) * size * size);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size; ++y) {
      // Nearest-neighbor source row inside the crop window, then undo the
      // conceptual chain crop(translate(flip(x))) one stage at a time.
      int sy = static_cast<int>((y + 0.5) * crop / size);
      int ty = spec.crop_y + sy - spec.dy;
      for (int x = 0; x < size; ++x) {
        int sx = static_cast<int>((x + 0.5) * crop / size);
        int tx = spec.crop_x + sx - spec.dx;
        std::int64_t src = -1;
        if (ty >= 0 && ty < size && tx >= 0 && tx < size) {
          int fx = spec.flip ? size - 1 - tx : tx;
          src = (static_cast<std::int64_t>(c) * size + ty) * size + fx;
        }
        (*map)[(static_cast<std::size_t>(c) * size + y) * size + x] = src;
      }
    }
  }
  return map;
}

Tensor apply_augmentation(const Tensor& image, const AugSpec& spec) {
  if (image.shape.size() != 3 || image.shape[0] != 3 || image.shape[1] != image.shape[2])
    throw std::invalid_argument("augmentation expects a square [3,H,W] tensor");
  int size = static_cast<int>(image.shape[1]);
  auto map = make_aug_map(spec, size);
  Tensor out = Tensor::zeros(image.shape);
  for (std::size_t i = 0; i < map->size(); ++i) {
    std::int64_t src = (*map)[i];
    out.data[i] = src < 0 ? 0.0 : image.data[static_cast<std::size_t>(src)];
  }
  return out;
}

}  // namespace plab
