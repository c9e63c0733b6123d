#include "trex/nn/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace trex::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

std::size_t shape_numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

template <class T>
Tensor<T>::Tensor() = default;

template <class T>
Tensor<T>::Tensor(Shape shape, bool requires_grad)
    : Tensor(std::move(shape), std::vector<T>{}, requires_grad)
{
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : Tensor(from_buffer(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad))
{
}

template <class T>
Tensor<T> Tensor<T>::from_buffer(Shape shape, Buffer<T> values, bool requires_grad)
{
    Tensor out;
    out.node_ = std::make_shared<Node<T>>();
    auto& node_ = out.node_;
    for (auto extent : shape) {
        if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    const auto n = shape_numel(shape);
    if (values.empty()) values.assign(n, T(0));
    if (values.size() != n) {
        throw DimensionError("tensor of shape " + shape_str(shape) + " needs " + std::to_string(n) +
                             " values, got " + std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
    return out;
}

template <class T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad)
{
    return Tensor(shape, requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad)
{
    return Tensor(shape, std::vector<T>(shape_numel(shape), value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad)
{
    return Tensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <class T>
std::size_t Tensor<T>::dim(std::size_t axis) const
{
    if (axis >= rank()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    }
    return node_->shape[axis];
}

template <class T>
T Tensor<T>::item() const
{
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <class T>
std::span<T> Tensor<T>::mutable_grad()
{
    node_->ensure_grad();
    return node_->grad;
}

template <class T>
void Tensor<T>::zero_grad()
{
    node_->grad.assign(node_->value.size(), T(0));
}

template <class T>
void Tensor<T>::backward() const
{
    // Iterative post-order DFS gives a topological order of the graph.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->ensure_grad();
    std::fill(node_->grad.begin(), node_->grad.end(), T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* node = *it;
        if (!node->backward_fn) continue;
        for (auto& parent : node->parents) {
            if (parent->requires_grad) parent->ensure_grad();
        }
        node->backward_fn(*node);
    }
}

template <class T>
Tensor<T> Tensor<T>::detach() const
{
    return from_buffer(node_->shape, node_->value, false);
}

template <class T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node<T>> node)
{
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace trex::nn
