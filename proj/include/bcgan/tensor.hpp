#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcgan {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

// Dense n-d array, row-major, 4-d layout batch x channel x height x width.
// Storage is shared between copies; graphs keep leaves by value and see
// later writes to .data().
template <class T>
class TensorT {
public:
    struct Storage {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad;  // empty unless requires_grad
        bool requires_grad = false;
        std::string name;
    };

    TensorT() : s_(std::make_shared<Storage>()) {}

    explicit TensorT(Shape shape, T fill = T(0)) : s_(std::make_shared<Storage>()) {
        for (int d : shape)
            if (d <= 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
        s_->shape = std::move(shape);
        s_->data.assign(static_cast<size_t>(numel(s_->shape)), fill);
    }

    TensorT(Shape shape, std::vector<T> values) : s_(std::make_shared<Storage>()) {
        if (static_cast<int64_t>(values.size()) != numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(shape));
        s_->shape = std::move(shape);
        s_->data = std::move(values);
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape), T(0)); }
    static TensorT full(Shape shape, T v) { return TensorT(std::move(shape), v); }
    static TensorT scalar(T v) { return TensorT(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return s_->shape; }
    int64_t size() const { return static_cast<int64_t>(s_->data.size()); }
    bool defined() const { return !s_->shape.empty(); }

    T* data() { return s_->data.data(); }
    const T* data() const { return s_->data.data(); }
    std::vector<T>& vec() { return s_->data; }
    const std::vector<T>& vec() const { return s_->data; }

    T item() const {
        if (size() != 1) throw std::logic_error("item() on non-scalar tensor " + shape_str(shape()));
        return s_->data[0];
    }

    // 4-d accessor
    T& at(int b, int c, int h, int w) {
        const Shape& sh = s_->shape;
        return s_->data[((static_cast<int64_t>(b) * sh[1] + c) * sh[2] + h) * sh[3] + w];
    }
    T at(int b, int c, int h, int w) const {
        const Shape& sh = s_->shape;
        return s_->data[((static_cast<int64_t>(b) * sh[1] + c) * sh[2] + h) * sh[3] + w];
    }

    bool requires_grad() const { return s_->requires_grad; }
    TensorT& set_requires_grad(bool rg = true) {
        s_->requires_grad = rg;
        if (rg && s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), T(0));
        if (!rg) s_->grad.clear();
        return *this;
    }

    T* grad() {
        if (!s_->requires_grad) throw std::logic_error("grad() on tensor without requires_grad");
        return s_->grad.data();
    }
    const T* grad() const {
        if (!s_->requires_grad) throw std::logic_error("grad() on tensor without requires_grad");
        return s_->grad.data();
    }
    void zero_grad() {
        if (s_->requires_grad) s_->grad.assign(s_->data.size(), T(0));
    }

    const std::string& name() const { return s_->name; }
    TensorT& set_name(std::string n) {
        s_->name = std::move(n);
        return *this;
    }

    // identity of the underlying storage, used by the graph to tell leaves apart
    const void* storage_id() const { return s_.get(); }

    bool all_finite() const {
        for (T v : s_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    TensorT clone() const {
        TensorT out;
        out.s_->shape = s_->shape;
        out.s_->data = s_->data;
        out.s_->name = s_->name;
        return out;
    }

private:
    std::shared_ptr<Storage> s_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace bcgan
