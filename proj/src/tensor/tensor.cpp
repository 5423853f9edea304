#include "vuld/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vuld {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_string(shape));
        n *= d;
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace detail {

template <typename T>
Tape<T>*& current_tape() {
    thread_local Tape<T>* tape = nullptr;
    return tape;
}

template Tape<float>*& current_tape<float>();
template Tape<double>*& current_tape<double>();

template <typename T>
static void check_finite_impl(std::span<const T> v, const char* op) {
    for (T x : v) {
        if (!std::isfinite(x)) throw DomainError(std::string(op) + ": non-finite value produced");
    }
}

void check_finite(std::span<const float> v, const char* op) { check_finite_impl(v, op); }
void check_finite(std::span<const double> v, const char* op) { check_finite_impl(v, op); }

}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
    return detail::make_output<T>(std::move(shape));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    auto t = detail::make_output<T>(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
        throw DimensionError("Tensor::from: shape " + shape_string(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    }
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values) {
    auto t = from(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    return t;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return impl_->data[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
    const auto& s = impl_->shape;
    if (index.size() != s.size()) throw DimensionError("at(): rank mismatch");
    std::int64_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i < 0 || i >= s[axis]) throw DimensionError("at(): index out of range");
        flat = flat * s[axis] + i;
        ++axis;
    }
    return impl_->data[static_cast<std::size_t>(flat)];
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return from(impl_->shape, impl_->data);
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
    std::vector<U> v(impl_->data.begin(), impl_->data.end());
    auto out = Tensor<U>::from(impl_->shape, std::move(v));
    out.set_requires_grad(impl_->requires_grad);
    return out;
}

template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;

template <typename T>
Tape<T>::Tape() = default;

template <typename T>
Tape<T>::~Tape() {
    if (detail::current_tape<T>() == this) detail::current_tape<T>() = nullptr;
}

template <typename T>
Tape<T>* Tape<T>::current() {
    return detail::current_tape<T>();
}

template <typename T>
void Tape<T>::record(const Tensor<T>& output, BackwardFn fn) {
    if (consumed_) throw TapeError("recording onto a consumed tape; call reset() first");
    auto& impl = *output.impl();
    impl.requires_grad = true;
    impl.producer = this;
    impl.producer_epoch = epoch_;
    nodes_.push_back(std::move(fn));
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ArgumentError("backward: loss must be a scalar tensor");
    }
    if (loss.impl()->producer != this || loss.impl()->producer_epoch != epoch_) {
        throw ArgumentError("backward: loss was not recorded on this tape");
    }
    if (consumed_) throw TapeError("backward: tape already consumed; call reset() first");
    consumed_ = true;
    loss.impl()->grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

template <typename T>
void Tape<T>::reset() {
    nodes_.clear();
    consumed_ = false;
    ++epoch_;
}

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(detail::current_tape<T>()) {
    detail::current_tape<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
    detail::current_tape<T>() = previous_;
}

template <typename T>
NoTapeScope<T>::NoTapeScope() : previous_(detail::current_tape<T>()) {
    detail::current_tape<T>() = nullptr;
}

template <typename T>
NoTapeScope<T>::~NoTapeScope() {
    detail::current_tape<T>() = previous_;
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template class TapeScope<float>;
template class TapeScope<double>;
template class NoTapeScope<float>;
template class NoTapeScope<double>;

}  // namespace vuld
