#pragma once

#include <string>
#include <vector>

#include "pargraph/scene.hpp"

namespace pargraph {

// NDJSON dataset: one frame object per line. Subject features are either
// inline ("feature": [..]) or referenced ("feature_ref": {"file", "row"})
// into a blob of little-endian 32-bit reals with a "PARF" header.
std::vector<FrameAnnotation> load_dataset(const std::string& path);

// When blob_file is non-empty, features go to that file (path relative to
// the NDJSON) and lines carry feature_ref entries; otherwise inline.
void save_dataset(const std::string& path, const std::vector<FrameAnnotation>& frames,
                  const std::string& blob_file = "");

Tensor2 load_feature_blob(const std::string& path);
void save_feature_blob(const std::string& path, const Tensor2& rows);

}  // namespace pargraph
