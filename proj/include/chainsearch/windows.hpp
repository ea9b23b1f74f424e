#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace chainsearch {

// A batch of fixed-length windows: sample i occupies
// data[i*length*width, (i+1)*length*width), stored time-major.
struct WindowSet {
  std::size_t length = 1;
  std::size_t width = 0;
  std::vector<float> data;
  std::vector<int> labels;

  std::size_t count() const noexcept { return labels.size(); }
  std::size_t sample_size() const noexcept { return length * width; }

  std::span<const float> sample(std::size_t i) const {
    return {data.data() + i * sample_size(), sample_size()};
  }
};

}  // namespace chainsearch
