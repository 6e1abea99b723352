#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bikd {

class Tape;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Shape-tagged flat array of doubles, row-major. A tensor is either a plain
// constant (node == -1) or linked to a node on the tape that produced it, in
// which case backward() can return a gradient for it.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    int node = -1;
    Tape* tape = nullptr;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor constant(Shape s, std::vector<double> d);
    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v);

    std::size_t size() const { return data.size(); }
    bool on_tape() const { return node >= 0; }

    // rank <= 2 accessors; rank-1 tensors count as a single row
    std::size_t rows() const;
    std::size_t cols() const;
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    double item() const; // size must be 1
};

} // namespace bikd
