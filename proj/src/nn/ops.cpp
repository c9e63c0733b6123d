#include "trex/nn/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace trex::nn {

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <class T>
using StrideMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <class T>
using CStrideMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <class T>
void check_finite(std::span<const T> values, const char* op)
{
    for (T v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op);
    }
}

// Builds the result node and wires the backward closure only when needed.
template <class T>
Tensor<T> make_result(Shape shape, Buffer<T> values, std::initializer_list<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward_fn, const char* op)
{
    check_finite<T>(values, op);
    auto out = Tensor<T>::from_buffer(std::move(shape), std::move(values));
    if (!grad_enabled()) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in.defined() && in.requires_grad());
    if (!needs) return out;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& in : inputs) {
        if (in.defined()) node.parents.push_back(in.node());
    }
    node.backward_fn = std::move(backward_fn);
    return out;
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op)
{
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <class T>
Node<T>* parent_if_grad(Node<T>& self, std::size_t i)
{
    if (i >= self.parents.size()) return nullptr;
    Node<T>* p = self.parents[i].get();
    return p->requires_grad ? p : nullptr;
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "add");
    Buffer<T> out(a.numel());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            if (auto* parent = parent_if_grad(self, p)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) parent->grad[i] += self.grad[i];
            }
        }
    }, "add");
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b)
{
    return add(a, scale(b, T(-1)));
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "mul");
    Buffer<T> out(a.numel());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>* pa = self.parents[0].get();
        Node<T>* pb = self.parents[1].get();
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] += self.grad[i] * pa->value[i];
        }
    }, "mul");
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor)
{
    Buffer<T> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    return make_result<T>(a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += factor * self.grad[i];
    }, "scale");
}

template <class T>
Tensor<T> relu(const Tensor<T>& x)
{
    Buffer<T> out(x.values().begin(), x.values().end());
    for (auto& v : out) v = v > T(0) ? v : T(0);
    return make_result<T>(x.shape(), std::move(out), {x}, [](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (p->value[i] > T(0)) p->grad[i] += self.grad[i];
        }
    }, "relu");
}

template <class T>
Tensor<T> gelu(const Tensor<T>& x)
{
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    Buffer<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
    return make_result<T>(x.shape(), std::move(out), {x}, [inv_sqrt2](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        const T inv_sqrt_2pi = T(1) / std::sqrt(T(2) * std::numbers::pi_v<T>);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T v = p->value[i];
            const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
            p->grad[i] += self.grad[i] * (cdf + v * pdf);
        }
    }, "gelu");
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias)
{
    if (weight.rank() != 2 || x.shape().back() != weight.dim(0)) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    const std::size_t in = weight.dim(0);
    const std::size_t out_dim = weight.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_dim)) {
        throw DimensionError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    const std::size_t rows = x.numel() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_dim;
    Buffer<T> out(rows * out_dim);
    {
        CMapMat<T> X(x.values().data(), rows, in);
        CMapMat<T> W(weight.values().data(), in, out_dim);
        MapMat<T> Y(out.data(), rows, out_dim);
        Y.noalias() = X * W;
        if (bias.defined()) {
            Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.values().data(), out_dim);
            Y.rowwise() += b;
        }
    }
    return make_result<T>(std::move(out_shape), std::move(out), {x, weight, bias},
                          [rows, in, out_dim](Node<T>& self) {
        Node<T>* px = self.parents[0].get();
        Node<T>* pw = self.parents[1].get();
        Node<T>* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
        CMapMat<T> dY(self.grad.data(), rows, out_dim);
        if (px->requires_grad) {
            MapMat<T> dX(px->grad.data(), rows, in);
            CMapMat<T> W(pw->value.data(), in, out_dim);
            dX.noalias() += dY * W.transpose();
        }
        if (pw->requires_grad) {
            MapMat<T> dW(pw->grad.data(), in, out_dim);
            CMapMat<T> X(px->value.data(), rows, in);
            dW.noalias() += X.transpose() * dY;
        }
        if (pb && pb->requires_grad) {
            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(pb->grad.data(), out_dim);
            db += dY.colwise().sum();
        }
    }, "linear");
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis)
{
    if (axis >= x.rank()) throw DimensionError("softmax: axis out of range for " + shape_str(x.shape()));
    const std::size_t len = x.dim(axis);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t outer = x.numel() / (len * inner);
    Buffer<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = xv[base];
            for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
            T total = 0;
            for (std::size_t j = 0; j < len; ++j) {
                const T e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
        }
    }
    return make_result<T>(x.shape(), std::move(out), {x}, [outer, len, inner](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * self.value[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t at = base + j * inner;
                    p->grad[at] += self.value[at] * (self.grad[at] - dot);
                }
            }
        }
    }, "softmax");
}

template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps)
{
    const std::size_t channels = x.shape().back();
    if (gamma.numel() != channels || beta.numel() != channels) {
        throw DimensionError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" + shape_str(beta.shape()) +
                             " do not match input " + shape_str(x.shape()));
    }
    if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
    const std::size_t rows = x.numel() / channels;
    Buffer<T> out(x.numel());
    auto normalized = std::make_shared<Buffer<T>>(x.numel());
    auto rstd = std::make_shared<Buffer<T>>(rows);
    auto xv = x.values();
    auto gv = gamma.values();
    auto bv = beta.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * channels;
        T mean = 0;
        for (std::size_t c = 0; c < channels; ++c) mean += row[c];
        mean /= T(channels);
        T var = 0;
        for (std::size_t c = 0; c < channels; ++c) var += (row[c] - mean) * (row[c] - mean);
        var /= T(channels);
        const T inv = T(1) / std::sqrt(var + T(eps));
        (*rstd)[r] = inv;
        for (std::size_t c = 0; c < channels; ++c) {
            const T xh = (row[c] - mean) * inv;
            (*normalized)[r * channels + c] = xh;
            out[r * channels + c] = gv[c] * xh + bv[c];
        }
    }
    return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                          [rows, channels, normalized, rstd](Node<T>& self) {
        Node<T>* px = self.parents[0].get();
        Node<T>* pg = self.parents[1].get();
        Node<T>* pb = self.parents[2].get();
        Buffer<T> dxhat(channels);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* dy = self.grad.data() + r * channels;
            const T* xh = normalized->data() + r * channels;
            if (pg->requires_grad) {
                for (std::size_t c = 0; c < channels; ++c) pg->grad[c] += dy[c] * xh[c];
            }
            if (pb->requires_grad) {
                for (std::size_t c = 0; c < channels; ++c) pb->grad[c] += dy[c];
            }
            if (!px->requires_grad) continue;
            T mean_d = 0;
            T mean_dx = 0;
            for (std::size_t c = 0; c < channels; ++c) {
                dxhat[c] = dy[c] * pg->value[c];
                mean_d += dxhat[c];
                mean_dx += dxhat[c] * xh[c];
            }
            mean_d /= T(channels);
            mean_dx /= T(channels);
            T* dx = px->grad.data() + r * channels;
            for (std::size_t c = 0; c < channels; ++c) dx[c] += (*rstd)[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
        }
    }, "layer_norm");
}

template <class T>
AttentionResult<T> attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads,
                             std::span<const T> mask, const Tensor<T>& bias)
{
    if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3 || k.shape() != v.shape() || q.dim(0) != k.dim(0) ||
        q.dim(2) != k.dim(2)) {
        throw DimensionError("attention: incompatible q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) +
                             ", v " + shape_str(v.shape()));
    }
    const std::size_t batch = q.dim(0);
    const std::size_t n = q.dim(1);
    const std::size_t m = k.dim(1);
    const std::size_t channels = q.dim(2);
    if (heads == 0 || channels % heads != 0) {
        throw std::invalid_argument("attention: channels " + std::to_string(channels) + " not divisible by heads " +
                                    std::to_string(heads));
    }
    const bool batched_mask = mask.size() == batch * n * m;
    if (!mask.empty() && !batched_mask && mask.size() != n * m) {
        throw DimensionError("attention: mask size " + std::to_string(mask.size()) + " matches neither B*N*M nor N*M");
    }
    if (bias.defined() && bias.shape() != Shape{heads, n, m}) {
        throw DimensionError("attention: bias " + shape_str(bias.shape()) + " must be [h,N,M]");
    }
    const std::size_t dh = channels / heads;
    const T scale_factor = T(1) / std::sqrt(T(dh));

    auto probs = std::make_shared<Buffer<T>>(batch * heads * n * m);
    Buffer<T> out(batch * n * channels);
    for (std::size_t b = 0; b < batch; ++b) {
        const T* mask_b = mask.empty() ? nullptr : mask.data() + (batched_mask ? b * n * m : 0);
        for (std::size_t h = 0; h < heads; ++h) {
            CStrideMap<T> Q(q.values().data() + b * n * channels + h * dh, n, dh, Eigen::OuterStride<>(channels));
            CStrideMap<T> K(k.values().data() + b * m * channels + h * dh, m, dh, Eigen::OuterStride<>(channels));
            CStrideMap<T> V(v.values().data() + b * m * channels + h * dh, m, dh, Eigen::OuterStride<>(channels));
            MapMat<T> P(probs->data() + (b * heads + h) * n * m, n, m);
            P.noalias() = (Q * K.transpose()) * scale_factor;
            if (bias.defined()) P += CMapMat<T>(bias.values().data() + h * n * m, n, m);
            if (mask_b) P += CMapMat<T>(mask_b, n, m);
            for (std::size_t i = 0; i < n; ++i) {
                auto row = P.row(i);
                const T mx = row.maxCoeff();
                row = (row.array() - mx).exp();
                row /= row.sum();
            }
            StrideMap<T> O(out.data() + b * n * channels + h * dh, n, dh, Eigen::OuterStride<>(channels));
            O.noalias() = P * V;
        }
    }

    AttentionResult<T> result;
    result.weights = Tensor<T>::from_buffer(Shape{batch, heads, n, m}, *probs);
    result.output = make_result<T>(Shape{batch, n, channels}, std::move(out), {q, k, v, bias},
                                   [=](Node<T>& self) {
        Node<T>* pq = self.parents[0].get();
        Node<T>* pk = self.parents[1].get();
        Node<T>* pv = self.parents[2].get();
        Node<T>* pbias = self.parents.size() > 3 ? self.parents[3].get() : nullptr;
        RowMat<T> dP(n, m);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const auto off_q = b * n * channels + h * dh;
                const auto off_k = b * m * channels + h * dh;
                CStrideMap<T> dO(self.grad.data() + off_q, n, dh, Eigen::OuterStride<>(channels));
                CMapMat<T> P(probs->data() + (b * heads + h) * n * m, n, m);
                CStrideMap<T> V(pv->value.data() + off_k, m, dh, Eigen::OuterStride<>(channels));
                if (pv->requires_grad) {
                    StrideMap<T> dV(pv->grad.data() + off_k, m, dh, Eigen::OuterStride<>(channels));
                    dV.noalias() += P.transpose() * dO;
                }
                dP.noalias() = dO * V.transpose();
                // dS = P * (dP - rowsum(dP * P))
                for (std::size_t i = 0; i < n; ++i) {
                    const T dot = dP.row(i).dot(P.row(i));
                    dP.row(i) = P.row(i).cwiseProduct((dP.row(i).array() - dot).matrix());
                }
                if (pbias && pbias->requires_grad) {
                    MapMat<T>(pbias->grad.data() + h * n * m, n, m) += dP;
                }
                if (pq->requires_grad) {
                    CStrideMap<T> K(pk->value.data() + off_k, m, dh, Eigen::OuterStride<>(channels));
                    StrideMap<T> dQ(pq->grad.data() + off_q, n, dh, Eigen::OuterStride<>(channels));
                    dQ.noalias() += (dP * K) * scale_factor;
                }
                if (pk->requires_grad) {
                    CStrideMap<T> Q(pq->value.data() + off_q, n, dh, Eigen::OuterStride<>(channels));
                    StrideMap<T> dK(pk->grad.data() + off_k, m, dh, Eigen::OuterStride<>(channels));
                    dK.noalias() += (dP.transpose() * Q) * scale_factor;
                }
            }
        }
    }, "attention");
    return result;
}

template <class T>
Tensor<T> gather(const Tensor<T>& x, const GatherIndex& index, Shape out_shape)
{
    if (!index || index->size() != shape_numel(out_shape)) {
        throw DimensionError("gather: index length does not match output shape " + shape_str(out_shape));
    }
    const auto n_in = static_cast<std::int64_t>(x.numel());
    Buffer<T> out(index->size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto src = (*index)[i];
        if (src >= n_in) throw DimensionError("gather: index out of range");
        out[i] = src >= 0 ? xv[static_cast<std::size_t>(src)] : T(0);
    }
    return make_result<T>(std::move(out_shape), std::move(out), {x}, [index](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const auto src = (*index)[i];
            if (src >= 0) p->grad[static_cast<std::size_t>(src)] += self.grad[i];
        }
    }, "gather");
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape)
{
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Buffer<T> out(x.values().begin(), x.values().end());
    return make_result<T>(std::move(shape), std::move(out), {x}, [](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }, "reshape");
}

template <class T>
Tensor<T> mean_rows(const Tensor<T>& x)
{
    const std::size_t channels = x.shape().back();
    const std::size_t rows = x.numel() / channels;
    Buffer<T> out(channels, T(0));
    auto xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < channels; ++c) out[c] += xv[r * channels + c];
    }
    for (auto& v : out) v /= T(rows);
    return make_result<T>(Shape{channels}, std::move(out), {x}, [rows, channels](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        const T inv = T(1) / T(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < channels; ++c) p->grad[r * channels + c] += self.grad[c] * inv;
        }
    }, "mean_rows");
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts)
{
    if (parts.empty()) throw DimensionError("concat: no inputs");
    const Shape& first = parts.front().shape();
    const std::size_t rows = parts.front().numel() / first.back();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& part : parts) {
        const Shape& s = part.shape();
        if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
            throw DimensionError("concat: leading extents differ: " + shape_str(first) + " vs " + shape_str(s));
        }
        widths.push_back(s.back());
        total += s.back();
    }
    Buffer<T> out(rows * total);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto pv = parts[p].values();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(pv.data() + r * widths[p], widths[p], out.data() + r * total + offset);
        }
        offset += widths[p];
    }
    Shape out_shape = first;
    out_shape.back() = total;

    auto result = Tensor<T>::from_buffer(std::move(out_shape), std::move(out));
    check_finite<T>(result.node()->value, "concat");
    bool needs = false;
    for (const auto& part : parts) needs = needs || part.requires_grad();
    if (!grad_enabled() || !needs) return result;
    auto& node = *result.node();
    node.requires_grad = true;
    for (const auto& part : parts) node.parents.push_back(part.node());
    node.backward_fn = [rows, total, widths](Node<T>& self) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < widths.size(); ++p) {
            Node<T>* parent = self.parents[p].get();
            if (parent->requires_grad) {
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < widths[p]; ++c) {
                        parent->grad[r * widths[p] + c] += self.grad[r * total + off + c];
                    }
                }
            }
            off += widths[p];
        }
    };
    return result;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x)
{
    T total = 0;
    for (T v : x.values()) total += v;
    return make_result<T>(Shape{1}, Buffer<T>{total}, {x}, [](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (auto& g : p->grad) g += self.grad[0];
    }, "sum");
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::mt19937_64& rng)
{
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (rate == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    const T inv_keep = T(1.0 / (1.0 - rate));
    auto mask = std::make_shared<Buffer<T>>(x.numel());
    for (auto& mk : *mask) mk = keep(rng) ? inv_keep : T(0);
    Buffer<T> out(x.numel());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * (*mask)[i];
    return make_result<T>(x.shape(), std::move(out), {x}, [mask](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * (*mask)[i];
    }, "dropout");
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label)
{
    const std::size_t classes = logits.numel();
    if (label >= classes) {
        throw DimensionError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                             shape_str(logits.shape()));
    }
    auto zv = logits.values();
    const T mx = *std::max_element(zv.begin(), zv.end());
    T total = 0;
    for (T z : zv) total += std::exp(z - mx);
    const T lse = mx + std::log(total);
    auto probs = std::make_shared<Buffer<T>>(classes);
    for (std::size_t c = 0; c < classes; ++c) (*probs)[c] = std::exp(zv[c] - lse);
    return make_result<T>(Shape{1}, Buffer<T>{lse - zv[label]}, {logits}, [probs, label](Node<T>& self) {
        Node<T>* p = self.parents[0].get();
        for (std::size_t c = 0; c < probs->size(); ++c) {
            p->grad[c] += self.grad[0] * ((*probs)[c] - (c == label ? T(1) : T(0)));
        }
    }, "cross_entropy");
}

#define TREX_INSTANTIATE_OPS(T)                                                                               \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                               \
    template Tensor<T> scale(const Tensor<T>&, T);                                                            \
    template Tensor<T> relu(const Tensor<T>&);                                                                \
    template Tensor<T> gelu(const Tensor<T>&);                                                                \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                                \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);              \
    template AttentionResult<T> attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,  \
                                          std::span<const T>, const Tensor<T>&);                              \
    template Tensor<T> gather(const Tensor<T>&, const GatherIndex&, Shape);                                   \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                                      \
    template Tensor<T> mean_rows(const Tensor<T>&);                                                           \
    template Tensor<T> concat(const std::vector<Tensor<T>>&);                                                 \
    template Tensor<T> sum(const Tensor<T>&);                                                                 \
    template Tensor<T> dropout(const Tensor<T>&, double, std::mt19937_64&);                                   \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::size_t);

TREX_INSTANTIATE_OPS(float)
TREX_INSTANTIATE_OPS(double)

}  // namespace trex::nn
