#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eg/tensor.hpp"

namespace eg {

/// An immutable, fully loaded split. `images` is standardized float data in
/// [N,C,H,W]; `raw_images` keeps the original bytes (empty for synthetic
/// data) so fixtures can be re-serialized bit-exactly and subsets re-derived.
struct Dataset {
    std::vector<std::uint8_t> raw_images;
    std::vector<int> labels;
    std::size_t n = 0, channels = 0, height = 0, width = 0;
    std::size_t class_count = 0;
    std::string split;
    std::vector<double> channel_mean, channel_std;  // stats of the [0,1]-scaled data
    Tensor<float> images;

    std::size_t size() const { return n; }
};

/// Big-endian IDX pair (magic 0x00000803 images / 0x00000801 labels).
/// Pixels are scaled by 1/255 then standardized per channel with constants
/// computed from this split (recorded in channel_mean/std).
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 const std::string& split_tag = "idx");

/// Inverse of load_idx for datasets that kept their raw bytes.
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

/// CIFAR-10 binary batches: 3073-byte records (1 label byte + 3*1024 pixels).
Dataset load_cifar10(const std::vector<std::string>& batch_files,
                     const std::string& split_tag = "cifar10");

/// Gaussian clusters with unit noise around per-class centers margin apart
/// (one axis per class, so classes <= dims). Deterministic in the seed;
/// layout [N, dims, 1, 1]; labels interleaved i % classes.
Dataset synth_blobs(std::size_t classes, std::size_t samples, std::size_t dims,
                    std::uint64_t seed, double margin = 6.0);

/// Seeded stratified sample of k items (equal per-class counts, remainder to
/// the lowest class indices). Splits with raw bytes are re-standardized from
/// the selected subset.
Dataset stratified_subset(const Dataset& ds, std::size_t k, std::uint64_t seed);

}  // namespace eg
