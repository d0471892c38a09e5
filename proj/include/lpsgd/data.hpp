#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lpsgd/vecmath.hpp"

namespace lpsgd {

struct Dataset {
    Matrix features;          // N x F
    std::vector<int> labels;  // in [0, num_classes)
    int num_classes = 0;
    Vec feature_scale;        // multiplier applied per feature at load time
};

// One parsed IDX file: a uint8 image tensor (magic 0x00000803) flattened
// row-major and scaled to [0,1], or a uint8 label vector (magic 0x00000801).
struct IdxContent {
    enum class Kind { images, labels };
    Kind kind = Kind::labels;
    std::size_t count = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    Matrix features;
    std::vector<int> labels;
};

IdxContent load_idx(const std::string& path);
Matrix load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

// Writers for caches and test fixtures (raw bytes, big-endian headers).
void write_idx_images(const std::string& path, std::span<const std::uint8_t> pixels,
                      std::size_t count, std::size_t rows, std::size_t cols);
void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels);

struct PcaModel {
    Vec mean;                 // length F
    Matrix components;        // k x F, orthonormal rows
    Vec explained_variance;   // length k, non-increasing
};

// Top-k principal directions of the column-centered data, via
// eigendecomposition of the sample covariance. Sign convention: the
// largest-magnitude coordinate of each component is positive, so fits are
// stable across runs and platforms.
PcaModel fit_pca(const Matrix& features, std::size_t k);

// (features - mean) * components^T, N x k.
Matrix pca_transform(const PcaModel& model, const Matrix& features);
// projected * components + mean, N x F.
Matrix pca_inverse_transform(const PcaModel& model, const Matrix& projected);

// Gaussian blobs with unit covariance; class centers are placed along
// coordinate axes so that the closest pair of centers is `separation` apart.
// Deterministic under seed.
Dataset synthetic_blobs(int classes, int per_class, int features, double separation,
                        std::uint64_t seed);

// Structured-text persistence with full-precision decimal floats.
void save_pca_model(const std::string& path, const PcaModel& model);
PcaModel load_pca_model(const std::string& path);

// Projected-feature cache: header label,pc1,...,pck.
void write_projected_csv(const std::string& path, std::span<const int> labels,
                         const Matrix& projected);

}  // namespace lpsgd
