#pragma once

// Reverse-mode differentiation over dense row-major matrices.
//
// Every operation exists twice: once on plain `Mat` values and once on `Var`
// handles that record onto a `Tape`. The `Var` overload computes its forward
// value by calling the `Mat` overload, so code templated on the value type
// (environment dynamics, MLP forward passes) produces bit-identical numbers
// whether or not a graph is being built.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace catpol {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Mat = Matrix<double>;
using Row = RowVector<double>;

enum class OpTag {
    Parameter,
    Constant,
    MatMul,
    Add,
    Sub,
    Mul,
    AddBias,
    Scale,
    AddScalar,
    Square,
    Sum,
    Mean,
    RowSum,
    ConcatCols,
    SliceCols,
    Reshape,
    Exp,
    Log,
    Tanh,
    Sin,
    Cos,
    Elu,
    SoftmaxRows,
    Clamp,
    SoftClamp,
    StopGradient,
    StraightThrough,
};

const char* op_name(OpTag op);

class Tape;
class GradSink;
struct TensorNode;

/// Backward rule: receives the node, the adjoint flowing into it, and a sink
/// that accumulates adjoints onto the node's parents.
using BackwardFn = std::function<void(const TensorNode&, const Mat& upstream, GradSink&)>;

struct TensorNode {
    std::size_t id = 0;
    Mat value;
    Mat grad;
    OpTag op = OpTag::Constant;
    std::vector<std::size_t> parents;
    BackwardFn backward; // operation payload lives in the closure
};

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Mat& value() const;
    const Mat& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

class GradSink {
public:
    explicit GradSink(const Tape& tape);

    void add(std::size_t id, const Mat& delta);
    bool has(std::size_t id) const { return id < live_.size() && live_[id]; }
    const Mat& adjoint(std::size_t id) const { return adjoints_[id]; }

private:
    friend class Tape;
    const Tape& tape_;
    std::vector<Mat> adjoints_;
    std::vector<bool> live_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Trainable leaf. Throws if `values.size() != rows * cols`.
    Var parameter(Eigen::Index rows, Eigen::Index cols, std::span<const double> values);
    Var parameter(Mat values);
    Var constant(Mat values);

    Var record(OpTag op, Mat value, std::vector<std::size_t> parents, BackwardFn backward);

    /// Accumulates d(root)/d(node) into the grad of every node reachable from
    /// `root`. The root must be 1x1.
    void backward(Var root);
    void zero_grads();

    const TensorNode& node(std::size_t id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }
    bool is_parameter(std::size_t id) const { return trainable_[id]; }
    std::vector<std::size_t> parameter_ids() const;

private:
    std::vector<TensorNode> nodes_;
    std::vector<bool> trainable_;
};

// ---------------------------------------------------------------------------
// Value kernels

Mat matmul(const Mat& a, const Mat& b);
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat mul(const Mat& a, const Mat& b);
Mat add_bias(const Mat& x, const Mat& bias);
Mat scale(const Mat& x, double c);
Mat add_scalar(const Mat& x, double c);
Mat square(const Mat& x);
Mat sum(const Mat& x);
Mat mean(const Mat& x);
Mat row_sum(const Mat& x);
Mat concat_cols(const std::vector<Mat>& parts);
Mat slice_cols(const Mat& x, Eigen::Index start, Eigen::Index count);
std::vector<Mat> split_cols(const Mat& x, const std::vector<Eigen::Index>& widths);
Mat reshape(const Mat& x, Eigen::Index rows, Eigen::Index cols);
Mat exp_op(const Mat& x);
Mat log_op(const Mat& x);
Mat tanh_op(const Mat& x);
Mat sin_op(const Mat& x);
Mat cos_op(const Mat& x);
Mat elu(const Mat& x);
Mat softmax_rows(const Mat& x);
Mat clamp(const Mat& x, double lo, double hi);
/// Identity on [-linear_limit, linear_limit], then saturates smoothly
/// (C1, tanh-shaped) towards +-bound.
Mat soft_clamp(const Mat& x, double linear_limit, double bound);
inline Mat stop_gradient(const Mat& x) { return x; }
inline Mat straight_through(const Mat& forward, const Mat&) { return forward; }

// ---------------------------------------------------------------------------
// Recording overloads

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_bias(Var x, Var bias);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);
Var square(Var x);
Var sum(Var x);
Var mean(Var x);
Var row_sum(Var x);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
std::vector<Var> split_cols(Var x, const std::vector<Eigen::Index>& widths);
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);
Var exp_op(Var x);
Var log_op(Var x);
Var tanh_op(Var x);
Var sin_op(Var x);
Var cos_op(Var x);
Var elu(Var x);
Var softmax_rows(Var x);
Var clamp(Var x, double lo, double hi);
Var soft_clamp(Var x, double linear_limit, double bound);
/// Copies the value forward; contributes no gradient to `x`.
Var stop_gradient(Var x);
/// Value is `forward`; the incoming adjoint is passed unchanged to `surrogate`.
Var straight_through(const Mat& forward, Var surrogate);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

/// Index of the largest entry of each row; ties go to the lowest index.
std::vector<Eigen::Index> argmax_rows(const Mat& x);
Mat one_hot_rows(std::span<const Eigen::Index> index, Eigen::Index cols);

bool all_finite(const Mat& x);

} // namespace catpol
