#include "bikd/tensor.hpp"

#include <sstream>

#include "bikd/errors.hpp"

namespace bikd {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " elements");
    }
}

Tensor Tensor::constant(Shape s, std::vector<double> d) {
    return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape s, double v) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) {
    return Tensor({1}, {v});
}

std::size_t Tensor::rows() const {
    if (shape.size() <= 1) return shape.empty() ? 1 : 1;
    if (shape.size() == 2) return shape[0];
    throw DimensionError("rows(): tensor rank > 2: " + shape_str(shape));
}

std::size_t Tensor::cols() const {
    if (shape.empty()) return 1;
    if (shape.size() == 1) return shape[0];
    if (shape.size() == 2) return shape[1];
    throw DimensionError("cols(): tensor rank > 2: " + shape_str(shape));
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item(): tensor has " + std::to_string(size()) + " elements, expected 1");
    }
    return data[0];
}

} // namespace bikd
