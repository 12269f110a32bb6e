#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "strokecast/rng.hpp"

namespace strokecast {

using Shape = std::vector<std::size_t>;

inline constexpr std::size_t kMaxRank = 3;

/// Dense row-major array of doubles, rank 0..3.
class Array {
public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> values);

    static Array scalar(double v) { return Array(Shape{}, std::vector<double>{v}); }
    static Array vector(std::vector<double> values);
    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Element (row, col) of a rank-2 array.
    double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
    double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

    double item() const;
    bool all_finite() const;

    friend bool operator==(const Array&, const Array&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    const Array& value() const;
    const Shape& shape() const { return value().shape(); }
    const Array& grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Append-only record of primitive ops. Nodes are created after their inputs,
/// so the node order is already topological and backward() walks it in reverse.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    // With recording off no backward closures are kept (inference only).
    explicit Tape(bool record = true) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Array value);

    bool recording() const { return record_; }
    std::size_t size() const { return nodes_.size(); }

    const Array& value(std::size_t id) const { return nodes_[id].value; }
    // Gradient after backward(); zeros for nodes the loss does not reach.
    const Array& grad(std::size_t id);

    // Accumulation buffer used by backward closures.
    Array& grad_buffer(std::size_t id);
    bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }

    void backward(Var loss);

    // Records an op result. Throws NumericError if `value` has NaN/Inf.
    Var push(const char* op, Array value, BackwardFn backward);

private:
    struct Node {
        Array value;
        BackwardFn backward;
        Array grad;
        bool has_grad = false;
    };
    bool record_;
    std::vector<Node> nodes_;
};

namespace ad {

Var add(Var a, Var b);  // b may be a scalar or broadcast along leading axes
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double c);
Var square(Var x);

// Rank 2 x rank 2, rank 3 x rank 3 (batched), or rank 3 x rank 2 (shared rhs).
Var matmul(Var a, Var b);
// Swaps the last two axes.
Var transpose(Var x);

Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);
Var slice(Var x, std::size_t axis, std::size_t begin, std::size_t end);

// Rows of a [N, d] table.
Var embedding_lookup(Var table, std::span<const int> ids);
// out[i] = x[i, index[i]] for a rank-2 x.
Var pick(Var x, std::span<const int> index);

Var softmax(Var x, std::size_t axis);
Var log_softmax(Var x, std::size_t axis);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var exp(Var x);
Var log(Var x);

Var sum(Var x);
Var mean(Var x);

// Normalizes over the last axis, then applies gain and bias of that length.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// Inverted dropout: kept entries are scaled by 1/(1-rate). Identity unless training.
Var dropout(Var x, double rate, Rng& rng, bool training);

// Entries with mask != 0 are replaced by `value` and receive no gradient.
Var masked_fill(Var x, std::span<const std::uint8_t> mask, double value);

}  // namespace ad

}  // namespace strokecast
