// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stamp/numerics.hpp"

namespace stamp {

// On-disk parameter container: a versioned text format holding a string
// config section, the vocabulary (word and n-gram lists), and named tensors
// with shapes and row-major values. Values are written with enough digits to
// round-trip 64-bit floats exactly, so save followed by load is the identity.
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::vector<std::string> words;
  std::vector<std::string> ngrams;
  std::vector<std::pair<std::string, Mat>> tensors;

  const Mat* find_tensor(const std::string& name) const;
};

// Writes to a temporary file in the same directory, then renames into place;
// a failed save never leaves a partial checkpoint at `path`.
void save_checkpoint(const std::string& path, const Checkpoint& c);

// Throws DataError on unreadable files, unknown versions, or malformed
// sections.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stamp

