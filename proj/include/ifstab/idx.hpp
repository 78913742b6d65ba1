#pragma once

#include "ifstab/dataset.hpp"

#include <string>

namespace ifstab {

// Reads an IDX image/label file pair (big-endian, magic 0x00000803 for
// images and 0x00000801 for labels).  Pixels are scaled to [0,1]; the binary
// label is 1 iff the original digit <= binarize_threshold.  Malformed input
// raises FormatError naming the offending file and byte offset.
DomainSample load_idx(const std::string& images_path,
                      const std::string& labels_path, int binarize_threshold);

}  // namespace ifstab
