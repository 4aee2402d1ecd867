#pragma once

#include <string>

#include "acnn/deconv.hpp"
#include "acnn/model.hpp"

namespace acnn {

// Checkpoints are a JSON manifest at <path> plus a raw little-endian float32
// blob at <path>.blob, written atomically (temp file + rename). The manifest
// records the model spec, aux normalization, optimizer metadata, tensor
// layout and an FNV-1a checksum of the blob.

constexpr int kCheckpointFormatVersion = 1;

uint64_t fnv1a_bytes(const void* data, size_t len);

void save_checkpoint(const CountingModel<float>& model, const std::string& path,
                     bool force = false);
void save_checkpoint(const DeconvModel<float>& model, const std::string& path,
                     bool force = false);

// "counting" or "deconv"
std::string checkpoint_kind(const std::string& path);

CountingModel<float> load_counting_checkpoint(const std::string& path);
DeconvModel<float> load_deconv_checkpoint(const std::string& path);

}  // namespace acnn
