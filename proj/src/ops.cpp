// SPDX-License-Identifier: Apache-2.0
#include "jasnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "gemm.hpp"
#include "jasnn/errors.hpp"

namespace jasnn::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw DimensionError(std::string(op) + " expects a rank-" + std::to_string(rank) +
                             " tensor, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    std::vector<double> out(m * n);
    detail::gemm(false, false, m, n, k, a.values().data(), b.values().data(), out.data(), false);
    return make_result("matmul", {m, n}, std::move(out), {a, b},
                       [a, b, m, n, k](std::span<const double> g) {
                           if (a.requires_grad()) {
                               std::vector<double> ga(m * k);
                               detail::gemm(false, true, m, k, n, g.data(), b.values().data(),
                                            ga.data(), false);
                               a.accumulate_grad(ga);
                           }
                           if (b.requires_grad()) {
                               std::vector<double> gb(k * n);
                               detail::gemm(true, false, k, n, m, a.values().data(), g.data(),
                                            gb.data(), false);
                               b.accumulate_grad(gb);
                           }
                       });
}

std::size_t conv_output_extent(std::size_t in, std::size_t k, int stride, int padding) {
    const auto padded = static_cast<long long>(in) + 2LL * padding;
    if (padded < static_cast<long long>(k))
        throw ConfigError("conv2d: kernel " + std::to_string(k) + " larger than padded input " +
                          std::to_string(padded));
    return static_cast<std::size_t>((padded - static_cast<long long>(k)) / stride + 1);
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    require_rank(input, 4, "conv2d");
    require_rank(kernel, 4, "conv2d");
    const std::size_t batch = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t c_out = kernel.dim(0), k = kernel.dim(2);
    if (kernel.dim(1) != c_in || kernel.dim(3) != k)
        throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) +
                             " incompatible with input " + shape_str(input.shape()));
    if (k != 1 && k != 3) throw ConfigError("conv2d: kernel size must be 1 or 3");
    if (stride != 1 && stride != 2) throw ConfigError("conv2d: stride must be 1 or 2");
    if (padding != 0 && padding != 1) throw ConfigError("conv2d: padding must be 0 or 1");
    const std::size_t ho = conv_output_extent(h, k, stride, padding);
    const std::size_t wo = conv_output_extent(w, k, stride, padding);

    const std::size_t rows = c_in * k * k;
    const std::size_t plane = ho * wo;
    const std::size_t cols_n = batch * plane;
    auto cols = std::make_shared<std::vector<double>>(rows * cols_n, 0.0);
    const auto x = input.values();
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t kh = 0; kh < k; ++kh) {
            for (std::size_t kw = 0; kw < k; ++kw) {
                double* row = cols->data() + ((c * k + kh) * k + kw) * cols_n;
                for (std::size_t b = 0; b < batch; ++b) {
                    const double* src = x.data() + (b * c_in + c) * h * w;
                    for (std::size_t oh = 0; oh < ho; ++oh) {
                        const long ih = static_cast<long>(oh * stride + kh) - padding;
                        if (ih < 0 || ih >= static_cast<long>(h)) continue;
                        double* dst = row + b * plane + oh * wo;
                        for (std::size_t ow = 0; ow < wo; ++ow) {
                            const long iw = static_cast<long>(ow * stride + kw) - padding;
                            if (iw >= 0 && iw < static_cast<long>(w)) dst[ow] = src[ih * w + iw];
                        }
                    }
                }
            }
        }
    }

    std::vector<double> tmp(c_out * cols_n);
    detail::gemm(false, false, c_out, cols_n, rows, kernel.values().data(), cols->data(),
                 tmp.data(), false);
    std::vector<double> out(batch * c_out * plane);
    for (std::size_t o = 0; o < c_out; ++o)
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(tmp.data() + o * cols_n + b * plane, plane,
                        out.data() + (b * c_out + o) * plane);

    return make_result(
        "conv2d", {batch, c_out, ho, wo}, std::move(out), {input, kernel},
        [=](std::span<const double> g) {
            std::vector<double> gt(c_out * cols_n);
            for (std::size_t o = 0; o < c_out; ++o)
                for (std::size_t b = 0; b < batch; ++b)
                    std::copy_n(g.data() + (b * c_out + o) * plane, plane,
                                gt.data() + o * cols_n + b * plane);
            if (kernel.requires_grad()) {
                std::vector<double> gk(c_out * rows);
                detail::gemm(false, true, c_out, rows, cols_n, gt.data(), cols->data(), gk.data(),
                             false);
                kernel.accumulate_grad(gk);
            }
            if (input.requires_grad()) {
                std::vector<double> gcols(rows * cols_n);
                detail::gemm(true, false, rows, cols_n, c_out, kernel.values().data(), gt.data(),
                             gcols.data(), false);
                std::vector<double> gx(batch * c_in * h * w, 0.0);
                for (std::size_t c = 0; c < c_in; ++c) {
                    for (std::size_t kh = 0; kh < k; ++kh) {
                        for (std::size_t kw = 0; kw < k; ++kw) {
                            const double* row = gcols.data() + ((c * k + kh) * k + kw) * cols_n;
                            for (std::size_t b = 0; b < batch; ++b) {
                                double* dst = gx.data() + (b * c_in + c) * h * w;
                                for (std::size_t oh = 0; oh < ho; ++oh) {
                                    const long ih = static_cast<long>(oh * stride + kh) - padding;
                                    if (ih < 0 || ih >= static_cast<long>(h)) continue;
                                    const double* src = row + b * plane + oh * wo;
                                    for (std::size_t ow = 0; ow < wo; ++ow) {
                                        const long iw = static_cast<long>(ow * stride + kw) - padding;
                                        if (iw >= 0 && iw < static_cast<long>(w))
                                            dst[ih * w + iw] += src[ow];
                                    }
                                }
                            }
                        }
                    }
                }
                input.accumulate_grad(gx);
            }
        });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result("add", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (a.requires_grad()) a.accumulate_grad(g);
        if (b.requires_grad()) b.accumulate_grad(g);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result("sub", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        if (a.requires_grad()) a.accumulate_grad(g);
        if (b.requires_grad()) {
            std::vector<double> neg(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) neg[i] = -g[i];
            b.accumulate_grad(neg);
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result("mul", a.shape(), std::move(out), {a, b}, [a, b](std::span<const double> g) {
        const auto av = a.values(), bv = b.values();
        if (a.requires_grad()) {
            std::vector<double> ga(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
            a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
            std::vector<double> gb(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
            b.accumulate_grad(gb);
        }
    });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.numel());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * s;
    return make_result("mul_scalar", a.shape(), std::move(out), {a},
                       [a, s](std::span<const double> g) {
                           std::vector<double> ga(g.size());
                           for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * s;
                           a.accumulate_grad(ga);
                       });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    const auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
    return make_result("relu", a.shape(), std::move(out), {a}, [a](std::span<const double> g) {
        const auto av = a.values();
        std::vector<double> ga(g.size());
        // Subgradient at exactly 0 is 0.
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = av[i] > 0.0 ? g[i] : 0.0;
        a.accumulate_grad(ga);
    });
}

Tensor detach(const Tensor& a) { return Tensor::from(a.shape(), to_vector(a.values())); }

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    return make_result("reshape", std::move(shape), to_vector(a.values()), {a},
                       [a](std::span<const double> g) { a.accumulate_grad(g); });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    require_rank(x, 2, "add_row_bias");
    const std::size_t rows = x.dim(0), n = x.dim(1);
    if (bias.numel() != n)
        throw DimensionError("add_row_bias: bias " + shape_str(bias.shape()) + " vs input " +
                             shape_str(x.shape()));
    std::vector<double> out(x.numel());
    const auto xv = x.values(), bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) out[r * n + j] = xv[r * n + j] + bv[j];
    return make_result("add_row_bias", x.shape(), std::move(out), {x, bias},
                       [x, bias, rows, n](std::span<const double> g) {
                           if (x.requires_grad()) x.accumulate_grad(g);
                           if (bias.requires_grad()) {
                               std::vector<double> gb(n, 0.0);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
                               bias.accumulate_grad(gb);
                           }
                       });
}

Tensor scale_columns(const Tensor& m, const Tensor& scale) {
    require_rank(m, 2, "scale_columns");
    const std::size_t rows = m.dim(0), r = m.dim(1);
    if (scale.numel() != r)
        throw DimensionError("scale_columns: scale " + shape_str(scale.shape()) + " vs matrix " +
                             shape_str(m.shape()));
    std::vector<double> out(m.numel());
    const auto mv = m.values(), sv = scale.values();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < r; ++j) out[i * r + j] = mv[i * r + j] * sv[j];
    return make_result("scale_columns", m.shape(), std::move(out), {m, scale},
                       [m, scale, rows, r](std::span<const double> g) {
                           const auto mv = m.values(), sv = scale.values();
                           if (m.requires_grad()) {
                               std::vector<double> gm(g.size());
                               for (std::size_t i = 0; i < rows; ++i)
                                   for (std::size_t j = 0; j < r; ++j)
                                       gm[i * r + j] = g[i * r + j] * sv[j];
                               m.accumulate_grad(gm);
                           }
                           if (scale.requires_grad()) {
                               std::vector<double> gs(r, 0.0);
                               for (std::size_t i = 0; i < rows; ++i)
                                   for (std::size_t j = 0; j < r; ++j)
                                       gs[j] += g[i * r + j] * mv[i * r + j];
                               scale.accumulate_grad(gs);
                           }
                       });
}

Tensor assemble_kernel(const std::vector<Tensor>& entries, std::size_t k) {
    if (entries.size() != k * k)
        throw ConfigError("assemble_kernel: expected " + std::to_string(k * k) + " entries, got " +
                          std::to_string(entries.size()));
    require_rank(entries.front(), 2, "assemble_kernel");
    const std::size_t c_in = entries.front().dim(0), c_out = entries.front().dim(1);
    for (const auto& e : entries)
        if (e.shape() != entries.front().shape())
            throw ConfigError("assemble_kernel: inconsistent entry shapes " +
                              shape_str(e.shape()) + " vs " + shape_str(entries.front().shape()));
    const std::size_t kk = k * k;
    std::vector<double> out(c_out * c_in * kk);
    for (std::size_t e = 0; e < kk; ++e) {
        const auto ev = entries[e].values();
        for (std::size_t c = 0; c < c_in; ++c)
            for (std::size_t o = 0; o < c_out; ++o) out[(o * c_in + c) * kk + e] = ev[c * c_out + o];
    }
    return make_result("assemble_kernel", {c_out, c_in, k, k}, std::move(out), entries,
                       [entries, c_in, c_out, kk](std::span<const double> g) {
                           for (std::size_t e = 0; e < kk; ++e) {
                               if (!entries[e].requires_grad()) continue;
                               std::vector<double> ge(c_in * c_out);
                               for (std::size_t c = 0; c < c_in; ++c)
                                   for (std::size_t o = 0; o < c_out; ++o)
                                       ge[c * c_out + o] = g[(o * c_in + c) * kk + e];
                               entries[e].accumulate_grad(ge);
                           }
                       });
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const std::size_t bc = x.dim(0) * x.dim(1), plane = x.dim(2) * x.dim(3);
    std::vector<double> out(bc);
    const auto xv = x.values();
    for (std::size_t i = 0; i < bc; ++i) {
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += xv[i * plane + p];
        out[i] = s / static_cast<double>(plane);
    }
    return make_result("global_avg_pool", {x.dim(0), x.dim(1)}, std::move(out), {x},
                       [x, bc, plane](std::span<const double> g) {
                           std::vector<double> gx(bc * plane);
                           const double inv = 1.0 / static_cast<double>(plane);
                           for (std::size_t i = 0; i < bc; ++i)
                               std::fill_n(gx.data() + i * plane, plane, g[i] * inv);
                           x.accumulate_grad(gx);
                       });
}

Tensor mean_over_axis(const Tensor& x, std::size_t axis) {
    const auto& s = x.shape();
    if (axis >= s.size())
        throw DimensionError("mean_over_axis: axis " + std::to_string(axis) + " out of range for " +
                             shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (i != axis) out_shape.push_back(s[i]);
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(outer * inner, 0.0);
    const auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * n + j) * inner + i];
    for (auto& v : out) v /= static_cast<double>(n);
    return make_result("mean_over_axis", std::move(out_shape), std::move(out), {x},
                       [x, outer, inner, n](std::span<const double> g) {
                           std::vector<double> gx(outer * n * inner);
                           const double inv = 1.0 / static_cast<double>(n);
                           for (std::size_t o = 0; o < outer; ++o)
                               for (std::size_t j = 0; j < n; ++j)
                                   for (std::size_t i = 0; i < inner; ++i)
                                       gx[(o * n + j) * inner + i] = g[o * inner + i] * inv;
                           x.accumulate_grad(gx);
                       });
}

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    return make_result("sum", {1}, {s}, {x}, [x](std::span<const double> g) {
        x.accumulate_grad(std::vector<double>(x.numel(), g[0]));
    });
}

namespace {

std::vector<double> row_softmax(std::span<const double> x, std::size_t rows, std::size_t cols) {
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.data() + r * cols;
        double* o = out.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) z += (o[j] = std::exp(in[j] - mx));
        for (std::size_t j = 0; j < cols; ++j) o[j] /= z;
    }
    return out;
}

} // namespace

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    auto out = row_softmax(logits.values(), rows, cols);
    auto saved = std::make_shared<std::vector<double>>(out);
    return make_result("softmax", logits.shape(), std::move(out), {logits},
                       [logits, saved, rows, cols](std::span<const double> g) {
                           const auto& y = *saved;
                           std::vector<double> gx(rows * cols);
                           for (std::size_t r = 0; r < rows; ++r) {
                               double dot = 0.0;
                               for (std::size_t j = 0; j < cols; ++j)
                                   dot += g[r * cols + j] * y[r * cols + j];
                               for (std::size_t j = 0; j < cols; ++j)
                                   gx[r * cols + j] = y[r * cols + j] * (g[r * cols + j] - dot);
                           }
                           logits.accumulate_grad(gx);
                       });
}

Tensor log_softmax(const Tensor& logits) {
    require_rank(logits, 2, "log_softmax");
    const std::size_t rows = logits.dim(0), cols = logits.dim(1);
    const auto x = logits.values();
    std::vector<double> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = x.data() + r * cols;
        const double mx = *std::max_element(in, in + cols);
        double z = 0.0;
        for (std::size_t j = 0; j < cols; ++j) z += std::exp(in[j] - mx);
        const double lse = mx + std::log(z);
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = in[j] - lse;
    }
    return make_result("log_softmax", logits.shape(), std::move(out), {logits},
                       [logits, rows, cols](std::span<const double> g) {
                           const auto p = row_softmax(logits.values(), rows, cols);
                           std::vector<double> gx(rows * cols);
                           for (std::size_t r = 0; r < rows; ++r) {
                               double gs = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) gs += g[r * cols + j];
                               for (std::size_t j = 0; j < cols; ++j)
                                   gx[r * cols + j] = g[r * cols + j] - p[r * cols + j] * gs;
                           }
                           logits.accumulate_grad(gx);
                       });
}

Tensor nll_loss(const Tensor& log_probs, std::span<const int> labels) {
    require_rank(log_probs, 2, "nll_loss");
    const std::size_t rows = log_probs.dim(0), cols = log_probs.dim(1);
    if (labels.size() != rows)
        throw DimensionError("nll_loss: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    std::vector<int> lab(labels.begin(), labels.end());
    for (int l : lab)
        if (l < 0 || static_cast<std::size_t>(l) >= cols)
            throw DataError("label " + std::to_string(l) + " outside [0, " + std::to_string(cols) + ")");
    const auto lp = log_probs.values();
    double s = 0.0;
    for (std::size_t r = 0; r < rows; ++r) s -= lp[r * cols + static_cast<std::size_t>(lab[r])];
    s /= static_cast<double>(rows);
    return make_result("nll_loss", {1}, {s}, {log_probs},
                       [log_probs, lab, rows, cols](std::span<const double> g) {
                           std::vector<double> gx(rows * cols, 0.0);
                           const double v = -g[0] / static_cast<double>(rows);
                           for (std::size_t r = 0; r < rows; ++r)
                               gx[r * cols + static_cast<std::size_t>(lab[r])] = v;
                           log_probs.accumulate_grad(gx);
                       });
}

Tensor concat0(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ConfigError("concat0: no tensors to concatenate");
    Shape shape = parts.front().shape();
    std::size_t lead = 0;
    for (const auto& p : parts) {
        Shape tail_a(p.shape().begin() + 1, p.shape().end());
        Shape tail_b(shape.begin() + 1, shape.end());
        if (p.rank() != shape.size() || tail_a != tail_b)
            throw DimensionError("concat0: incompatible shapes " + shape_str(p.shape()) + " and " +
                                 shape_str(shape));
        lead += p.dim(0);
    }
    shape[0] = lead;
    std::vector<double> out;
    out.reserve(shape_numel(shape));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_result("concat0", std::move(shape), std::move(out), parts,
                       [parts](std::span<const double> g) {
                           std::size_t offset = 0;
                           for (const auto& p : parts) {
                               if (p.requires_grad()) p.accumulate_grad(g.subspan(offset, p.numel()));
                               offset += p.numel();
                           }
                       });
}

Tensor slice0(const Tensor& x, std::size_t begin, std::size_t end) {
    if (begin >= end || end > x.dim(0))
        throw DimensionError("slice0: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") invalid for " + shape_str(x.shape()));
    const std::size_t stride = x.numel() / x.dim(0);
    Shape shape = x.shape();
    shape[0] = end - begin;
    const auto xv = x.values();
    std::vector<double> out(xv.begin() + static_cast<long>(begin * stride),
                            xv.begin() + static_cast<long>(end * stride));
    return make_result("slice0", std::move(shape), std::move(out), {x},
                       [x, begin, stride](std::span<const double> g) {
                           std::vector<double> gx(x.numel(), 0.0);
                           std::copy(g.begin(), g.end(), gx.begin() + static_cast<long>(begin * stride));
                           x.accumulate_grad(gx);
                       });
}

Tensor repeat0(const Tensor& x, std::size_t times) {
    if (times == 0) throw ConfigError("repeat0: times must be positive");
    Shape shape = x.shape();
    shape[0] *= times;
    std::vector<double> out;
    out.reserve(x.numel() * times);
    for (std::size_t t = 0; t < times; ++t) out.insert(out.end(), x.values().begin(), x.values().end());
    return make_result("repeat0", std::move(shape), std::move(out), {x},
                       [x, times](std::span<const double> g) {
                           const std::size_t n = x.numel();
                           std::vector<double> gx(n, 0.0);
                           for (std::size_t t = 0; t < times; ++t)
                               for (std::size_t i = 0; i < n; ++i) gx[i] += g[t * n + i];
                           x.accumulate_grad(gx);
                       });
}

Tensor block_mean0(const Tensor& x, std::size_t times) {
    if (times == 0 || x.dim(0) % times != 0)
        throw DimensionError("block_mean0: leading extent " + std::to_string(x.dim(0)) +
                             " not divisible by " + std::to_string(times));
    Shape shape = x.shape();
    shape[0] /= times;
    const std::size_t n = x.numel() / times;
    const auto xv = x.values();
    std::vector<double> out(n, 0.0);
    for (std::size_t t = 0; t < times; ++t)
        for (std::size_t i = 0; i < n; ++i) out[i] += xv[t * n + i];
    const double inv = 1.0 / static_cast<double>(times);
    for (auto& v : out) v *= inv;
    return make_result("block_mean0", std::move(shape), std::move(out), {x},
                       [x, times, n, inv](std::span<const double> g) {
                           std::vector<double> gx(n * times);
                           for (std::size_t t = 0; t < times; ++t)
                               for (std::size_t i = 0; i < n; ++i) gx[t * n + i] = g[i] * inv;
                           x.accumulate_grad(gx);
                       });
}

BatchNormState BatchNormState::fresh(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
    require_rank(x, 4, "batch_norm");
    const std::size_t batch = x.dim(0), channels = x.dim(1), plane = x.dim(2) * x.dim(3);
    if (gamma.numel() != channels || beta.numel() != channels ||
        state.running_mean.size() != channels || state.running_var.size() != channels)
        throw DimensionError("batch_norm: parameters do not match " + std::to_string(channels) +
                             " channels of " + shape_str(x.shape()));
    if (training && batch < 2)
        throw StatisticsError("batch_norm in training mode needs a batch of at least 2, got " +
                              std::to_string(batch));
    const double m = static_cast<double>(batch * plane);
    const auto xv = x.values(), gv = gamma.values(), bv = beta.values();
    std::vector<double> mean(channels), inv_std(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        if (training) {
            double s = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t p = 0; p < plane; ++p) s += xv[(b * channels + c) * plane + p];
            const double mu = s / m;
            double v = 0.0;
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t p = 0; p < plane; ++p) {
                    const double d = xv[(b * channels + c) * plane + p] - mu;
                    v += d * d;
                }
            v /= m;
            mean[c] = mu;
            inv_std[c] = 1.0 / std::sqrt(v + kBatchNormEps);
            state.running_mean[c] = (1.0 - kBatchNormMomentum) * state.running_mean[c] +
                                    kBatchNormMomentum * mu;
            state.running_var[c] = (1.0 - kBatchNormMomentum) * state.running_var[c] +
                                   kBatchNormMomentum * v * m / (m - 1.0);
        } else {
            mean[c] = state.running_mean[c];
            inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + kBatchNormEps);
        }
    }
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    std::vector<double> out(x.numel());
    for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t p = 0; p < plane; ++p) {
                const std::size_t i = (b * channels + c) * plane + p;
                (*xhat)[i] = (xv[i] - mean[c]) * inv_std[c];
                out[i] = gv[c] * (*xhat)[i] + bv[c];
            }
    return make_result(
        "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
        [=](std::span<const double> g) {
            const auto gv = gamma.values();
            std::vector<double> sum_g(channels, 0.0), sum_gx(channels, 0.0);
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t p = 0; p < plane; ++p) {
                        const std::size_t i = (b * channels + c) * plane + p;
                        sum_g[c] += g[i];
                        sum_gx[c] += g[i] * (*xhat)[i];
                    }
            if (gamma.requires_grad()) gamma.accumulate_grad(sum_gx);
            if (beta.requires_grad()) beta.accumulate_grad(sum_g);
            if (!x.requires_grad()) return;
            std::vector<double> gx(x.numel());
            for (std::size_t b = 0; b < batch; ++b)
                for (std::size_t c = 0; c < channels; ++c)
                    for (std::size_t p = 0; p < plane; ++p) {
                        const std::size_t i = (b * channels + c) * plane + p;
                        if (training) {
                            gx[i] = gv[c] * inv_std[c] / m *
                                    (m * g[i] - sum_g[c] - (*xhat)[i] * sum_gx[c]);
                        } else {
                            gx[i] = g[i] * gv[c] * inv_std[c];
                        }
                    }
            x.accumulate_grad(gx);
        });
}

} // namespace jasnn::ops
