#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vuld {

using Shape = std::vector<std::int64_t>;

// Error taxonomy shared by every module.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct GeometryError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};
struct TapeError : std::logic_error {
    using std::logic_error::logic_error;
};

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename T>
class Tape;

template <typename T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    const Tape<T>* producer = nullptr;
    std::uint64_t producer_epoch = 0;

    void accumulate_grad(std::span<const T> g) {
        if (grad.empty()) {
            grad.assign(g.begin(), g.end());
            return;
        }
        for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
    }
    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), T(0));
        return grad;
    }
};

/// Dense row-major tensor handle. Copies share storage; ops never mutate
/// their inputs, so a written tensor behaves as an immutable value.
template <typename T>
class Tensor {
   public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, T value);
    static Tensor from(Shape shape, std::vector<T> values);
    static Tensor scalar(T value) { return full({}, value); }
    /// Leaf tensor that accumulates gradients.
    static Tensor parameter(Shape shape, std::vector<T> values);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t dim(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

    std::span<const T> data() const& { return impl_->data; }
    std::span<const T> data() const&& = delete;  // would dangle
    // Direct write access for constructors, optimizers and I/O.
    std::span<T> mutable_data() { return impl_->data; }
    T item() const;
    T at(std::initializer_list<std::int64_t> index) const;

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> mutable_grad() { return impl_->grad_buffer(); }
    void zero_grad() { impl_->grad.clear(); }

    /// Deep copy without tape linkage.
    Tensor detach() const;
    template <typename U>
    Tensor<U> cast() const;

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

   private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

/// Records differentiable ops in execution order. One tape serves one
/// training step; backward consumes it, and reset() re-arms it.
template <typename T>
class Tape {
   public:
    using BackwardFn = std::function<void()>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void backward(const Tensor<T>& loss);
    void reset();
    std::size_t size() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Op plumbing: an op calls record() after computing its output.
    void record(const Tensor<T>& output, BackwardFn fn);
    std::uint64_t epoch() const { return epoch_; }

    static Tape* current();

   private:
    std::vector<BackwardFn> nodes_;
    std::uint64_t epoch_ = 1;
    bool consumed_ = false;
};

/// Makes a tape the recording target for the current thread.
template <typename T>
class TapeScope {
   public:
    explicit TapeScope(Tape<T>& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

   private:
    Tape<T>* previous_;
};

/// Suspends recording for the current thread (inference, target building).
template <typename T>
class NoTapeScope {
   public:
    NoTapeScope();
    ~NoTapeScope();
    NoTapeScope(const NoTapeScope&) = delete;
    NoTapeScope& operator=(const NoTapeScope&) = delete;

   private:
    Tape<T>* previous_;
};

namespace detail {

template <typename T>
Tape<T>*& current_tape();

/// Returns the active tape when any input participates in differentiation.
template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tape = current_tape<T>();
    if (tape == nullptr) return nullptr;
    for (const auto* t : inputs) {
        if (t != nullptr && t->defined() && t->requires_grad()) return tape;
    }
    return nullptr;
}

template <typename T>
Tensor<T> make_output(Shape shape) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), T(0));
    impl->shape = std::move(shape);
    return Tensor<T>(std::move(impl));
}

void check_finite(std::span<const float> v, const char* op);
void check_finite(std::span<const double> v, const char* op);

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace vuld
