#include "lpsgd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "lpsgd/optimizer.hpp"  // format_double
#include "lpsgd/rng.hpp"

namespace lpsgd {

namespace {

constexpr std::uint32_t kMagicImages = 0x00000803;
constexpr std::uint32_t kMagicLabels = 0x00000801;

[[noreturn]] void parse_fail(const std::string& path, std::size_t offset,
                             const std::string& what) {
    throw std::runtime_error("idx parse error in '" + path + "' at byte " +
                             std::to_string(offset) + ": " + what);
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset,
                        const std::string& path) {
    if (offset + 4 > buf.size()) parse_fail(path, offset, "truncated 32-bit field");
    return (static_cast<std::uint32_t>(buf[offset]) << 24) |
           (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
           static_cast<std::uint32_t>(buf[offset + 3]);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                           static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

IdxContent load_idx(const std::string& path) {
    const std::vector<std::uint8_t> buf = read_file(path);
    const std::uint32_t magic = read_be32(buf, 0, path);
    IdxContent out;
    if (magic == kMagicLabels) {
        const std::uint32_t n = read_be32(buf, 4, path);
        if (buf.size() != 8 + static_cast<std::size_t>(n)) {
            parse_fail(path, buf.size(), "label payload size mismatch (expected " +
                                             std::to_string(8 + n) + " bytes)");
        }
        out.kind = IdxContent::Kind::labels;
        out.count = n;
        out.labels.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) out.labels[i] = buf[8 + i];
        return out;
    }
    if (magic == kMagicImages) {
        const std::uint32_t n = read_be32(buf, 4, path);
        const std::uint32_t rows = read_be32(buf, 8, path);
        const std::uint32_t cols = read_be32(buf, 12, path);
        if (rows == 0 || cols == 0) parse_fail(path, 8, "zero image dimensions");
        const std::uint64_t pixels =
            static_cast<std::uint64_t>(n) * rows * cols;
        if (pixels > (1ull << 32)) parse_fail(path, 4, "dimension overflow");
        if (buf.size() != 16 + pixels) {
            parse_fail(path, buf.size(), "image payload size mismatch (expected " +
                                             std::to_string(16 + pixels) + " bytes)");
        }
        out.kind = IdxContent::Kind::images;
        out.count = n;
        out.rows = rows;
        out.cols = cols;
        out.features = Matrix(n, static_cast<std::size_t>(rows) * cols);
        for (std::size_t i = 0; i < pixels; ++i) {
            out.features.data()[i] = static_cast<double>(buf[16 + i]) / 255.0;
        }
        return out;
    }
    parse_fail(path, 0, "unsupported element type (magic 0x" +
                            [](std::uint32_t m) {
                                char b[16];
                                std::snprintf(b, sizeof(b), "%08x", m);
                                return std::string(b);
                            }(magic) +
                            ")");
}

Matrix load_idx_images(const std::string& path) {
    IdxContent c = load_idx(path);
    if (c.kind != IdxContent::Kind::images) {
        throw std::runtime_error("'" + path + "' is not an image tensor");
    }
    return std::move(c.features);
}

std::vector<int> load_idx_labels(const std::string& path) {
    IdxContent c = load_idx(path);
    if (c.kind != IdxContent::Kind::labels) {
        throw std::runtime_error("'" + path + "' is not a label vector");
    }
    return std::move(c.labels);
}

void write_idx_images(const std::string& path, std::span<const std::uint8_t> pixels,
                      std::size_t count, std::size_t rows, std::size_t cols) {
    if (pixels.size() != count * rows * cols) {
        throw std::invalid_argument("write_idx_images: payload size mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    append_be32(out, kMagicImages);
    append_be32(out, static_cast<std::uint32_t>(count));
    append_be32(out, static_cast<std::uint32_t>(rows));
    append_be32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()),
              static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    append_be32(out, kMagicLabels);
    append_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()),
              static_cast<std::streamsize>(labels.size()));
}

namespace {

// Symmetric eigendecomposition: Householder tridiagonalization followed by
// implicit-shift QL. A is destroyed; on return its rows hold the
// eigenvectors and eval the matching eigenvalues (unordered).
void symmetric_eigen(Matrix& a, Vec& eval) {
    const std::size_t n = a.rows();
    eval.assign(n, 0.0);
    Vec off(n, 0.0);

    // Householder reduction (Numerical-Recipes-style tred2).
    for (std::size_t i = n - 1; i >= 1; --i) {
        const std::size_t l = i - 1;
        double h = 0.0;
        double scale = 0.0;
        if (l > 0) {
            for (std::size_t k = 0; k <= l; ++k) scale += std::fabs(a(i, k));
            if (scale == 0.0) {
                off[i] = a(i, l);
            } else {
                for (std::size_t k = 0; k <= l; ++k) {
                    a(i, k) /= scale;
                    h += a(i, k) * a(i, k);
                }
                double f = a(i, l);
                double g = (f >= 0.0) ? -std::sqrt(h) : std::sqrt(h);
                off[i] = scale * g;
                h -= f * g;
                a(i, l) = f - g;
                f = 0.0;
                for (std::size_t j = 0; j <= l; ++j) {
                    a(j, i) = a(i, j) / h;
                    g = 0.0;
                    for (std::size_t k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
                    for (std::size_t k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
                    off[j] = g / h;
                    f += off[j] * a(i, j);
                }
                const double hh = f / (h + h);
                for (std::size_t j = 0; j <= l; ++j) {
                    f = a(i, j);
                    off[j] = g = off[j] - hh * f;
                    for (std::size_t k = 0; k <= j; ++k) {
                        a(j, k) -= f * off[k] + g * a(i, k);
                    }
                }
            }
        } else {
            off[i] = a(i, l);
        }
        eval[i] = h;
    }
    eval[0] = 0.0;
    off[0] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (eval[i] != 0.0) {
            for (std::size_t j = 0; j < i; ++j) {
                double g = 0.0;
                for (std::size_t k = 0; k < i; ++k) g += a(i, k) * a(k, j);
                for (std::size_t k = 0; k < i; ++k) a(k, j) -= g * a(k, i);
            }
        }
        eval[i] = a(i, i);
        a(i, i) = 1.0;
        for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j) = 0.0;
    }

    // Implicit-shift QL on the tridiagonal form (tqli).
    for (std::size_t i = 1; i < n; ++i) off[i - 1] = off[i];
    off[n - 1] = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        int iterations = 0;
        std::size_t m = l;
        do {
            for (m = l; m + 1 < n; ++m) {
                const double dd = std::fabs(eval[m]) + std::fabs(eval[m + 1]);
                if (std::fabs(off[m]) <= 1e-300 + 2.3e-16 * dd) break;
            }
            if (m != l) {
                if (++iterations == 64) {
                    throw std::runtime_error("symmetric_eigen: QL failed to converge");
                }
                double g = (eval[l + 1] - eval[l]) / (2.0 * off[l]);
                double r = std::hypot(g, 1.0);
                g = eval[m] - eval[l] + off[l] / (g + (g >= 0.0 ? std::fabs(r) : -std::fabs(r)));
                double s = 1.0;
                double c = 1.0;
                double p = 0.0;
                bool broke_early = false;
                for (std::size_t i = m; i-- > l;) {
                    double f = s * off[i];
                    const double b = c * off[i];
                    r = std::hypot(f, g);
                    off[i + 1] = r;
                    if (r == 0.0) {
                        eval[i + 1] -= p;
                        off[m] = 0.0;
                        broke_early = true;
                        break;
                    }
                    s = f / r;
                    c = g / r;
                    g = eval[i + 1] - p;
                    r = (eval[i] - g) * s + 2.0 * c * b;
                    p = s * r;
                    eval[i + 1] = g + p;
                    g = c * r - b;
                    for (std::size_t k = 0; k < n; ++k) {
                        f = a(k, i + 1);
                        a(k, i + 1) = s * a(k, i) + c * f;
                        a(k, i) = c * a(k, i) - s * f;
                    }
                }
                if (broke_early) continue;
                eval[l] -= p;
                off[l] = g;
                off[m] = 0.0;
            }
        } while (m != l);
    }
    // Columns of a are now eigenvectors; transpose so rows are.
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) std::swap(a(i, j), a(j, i));
    }
}

}  // namespace

PcaModel fit_pca(const Matrix& features, std::size_t k) {
    const std::size_t n = features.rows();
    const std::size_t f = features.cols();
    if (n < 2) throw std::domain_error("fit_pca: need at least 2 samples");
    if (k < 1 || k > std::min(n, f)) {
        throw std::domain_error("fit_pca: k out of range");
    }

    PcaModel model;
    model.mean.assign(f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) model.mean[j] += features(i, j);
    }
    for (double& m : model.mean) m /= static_cast<double>(n);

    // Sample covariance (F x F, symmetric).
    Matrix cov(f, f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < f; ++p) {
            const double xp = features(i, p) - model.mean[p];
            for (std::size_t q = p; q < f; ++q) {
                cov(p, q) += xp * (features(i, q) - model.mean[q]);
            }
        }
    }
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t p = 0; p < f; ++p) {
        for (std::size_t q = p; q < f; ++q) {
            cov(p, q) *= inv;
            cov(q, p) = cov(p, q);
        }
    }

    Vec eval;
    symmetric_eigen(cov, eval);

    std::vector<std::size_t> order(f);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return eval[a] > eval[b]; });

    model.components = Matrix(k, f);
    model.explained_variance.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t src = order[c];
        model.explained_variance[c] = std::max(0.0, eval[src]);
        // Largest-magnitude coordinate positive.
        std::size_t arg = 0;
        for (std::size_t j = 1; j < f; ++j) {
            if (std::fabs(cov(src, j)) > std::fabs(cov(src, arg))) arg = j;
        }
        const double flip = (cov(src, arg) < 0.0) ? -1.0 : 1.0;
        for (std::size_t j = 0; j < f; ++j) model.components(c, j) = flip * cov(src, j);
    }
    return model;
}

Matrix pca_transform(const PcaModel& model, const Matrix& features) {
    const std::size_t f = model.mean.size();
    if (features.cols() != f) throw std::domain_error("pca_transform: feature width mismatch");
    const std::size_t n = features.rows();
    const std::size_t k = model.components.rows();
    Matrix out(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < f; ++j) {
                s += (features(i, j) - model.mean[j]) * model.components(c, j);
            }
            out(i, c) = s;
        }
    }
    return out;
}

Matrix pca_inverse_transform(const PcaModel& model, const Matrix& projected) {
    const std::size_t k = model.components.rows();
    if (projected.cols() != k) {
        throw std::domain_error("pca_inverse_transform: component count mismatch");
    }
    const std::size_t f = model.mean.size();
    const std::size_t n = projected.rows();
    Matrix out(n, f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) {
            double s = model.mean[j];
            for (std::size_t c = 0; c < k; ++c) {
                s += projected(i, c) * model.components(c, j);
            }
            out(i, j) = s;
        }
    }
    return out;
}

Dataset synthetic_blobs(int classes, int per_class, int features, double separation,
                        std::uint64_t seed) {
    if (classes < 2) throw std::invalid_argument("synthetic_blobs: need >= 2 classes");
    if (per_class < 1) throw std::invalid_argument("synthetic_blobs: need >= 1 per class");
    if (features < 1) throw std::invalid_argument("synthetic_blobs: need >= 1 feature");
    if (separation < 0.0) throw std::invalid_argument("synthetic_blobs: separation must be >= 0");

    // Centers along coordinate axes (cycled with growing multipliers when
    // classes > features), scaled so the closest pair sits `separation` apart.
    Matrix centers(classes, features);
    if (classes == 2) {
        centers(1, 0) = separation;
    } else {
        const double base = (classes <= features) ? separation / std::sqrt(2.0) : separation;
        for (int c = 0; c < classes; ++c) {
            centers(c, c % features) = base * (1.0 + c / features);
        }
    }

    Dataset ds;
    ds.num_classes = classes;
    ds.features = Matrix(static_cast<std::size_t>(classes) * per_class, features);
    ds.labels.resize(static_cast<std::size_t>(classes) * per_class);
    ds.feature_scale.assign(features, 1.0);

    std::size_t row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < per_class; ++i, ++row) {
            StreamRng rng(seed, streams::kDataSynthesis, row);
            for (int j = 0; j < features; ++j) {
                ds.features(row, j) = centers(c, j) + rng.next_gaussian();
            }
            ds.labels[row] = c;
        }
    }
    return ds;
}

void save_pca_model(const std::string& path, const PcaModel& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    const std::size_t k = model.components.rows();
    const std::size_t f = model.mean.size();
    out << "pca_model v1\n";
    out << "components " << k << "\n";
    out << "features " << f << "\n";
    out << "mean";
    for (double m : model.mean) out << ' ' << format_double(m);
    out << "\nexplained_variance";
    for (double v : model.explained_variance) out << ' ' << format_double(v);
    out << '\n';
    for (std::size_t c = 0; c < k; ++c) {
        out << "component " << c;
        for (std::size_t j = 0; j < f; ++j) out << ' ' << format_double(model.components(c, j));
        out << '\n';
    }
}

PcaModel load_pca_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::string tag, version;
    in >> tag >> version;
    if (tag != "pca_model" || version != "v1") {
        throw std::runtime_error("'" + path + "': not a pca_model v1 file");
    }
    std::size_t k = 0, f = 0;
    in >> tag >> k >> tag >> f;
    PcaModel model;
    model.mean.resize(f);
    in >> tag;
    for (double& m : model.mean) in >> m;
    model.explained_variance.resize(k);
    in >> tag;
    for (double& v : model.explained_variance) in >> v;
    model.components = Matrix(k, f);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t idx = 0;
        in >> tag >> idx;
        for (std::size_t j = 0; j < f; ++j) in >> model.components(c, j);
    }
    if (!in) throw std::runtime_error("'" + path + "': truncated pca_model file");
    return model;
}

void write_projected_csv(const std::string& path, std::span<const int> labels,
                         const Matrix& projected) {
    if (labels.size() != projected.rows()) {
        throw std::invalid_argument("write_projected_csv: label count mismatch");
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << "label";
    for (std::size_t c = 0; c < projected.cols(); ++c) out << ",pc" << (c + 1);
    out << '\n';
    for (std::size_t i = 0; i < projected.rows(); ++i) {
        out << labels[i];
        for (std::size_t c = 0; c < projected.cols(); ++c) {
            out << ',' << format_double(projected(i, c));
        }
        out << '\n';
    }
}

}  // namespace lpsgd
