#include "catpol/gradcore.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace catpol {

namespace {

void require_same_shape(const Mat& a, const Mat& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()) + ")");
}

Tape& tape_of(Var x)
{
    if (x.tape == nullptr)
        throw std::logic_error("Var is not attached to a tape");
    return *x.tape;
}

Tape& common_tape(Var a, Var b)
{
    if (a.tape != b.tape)
        throw std::logic_error("operands live on different tapes");
    return tape_of(a);
}

} // namespace

const char* op_name(OpTag op)
{
    switch (op) {
    case OpTag::Parameter: return "parameter";
    case OpTag::Constant: return "constant";
    case OpTag::MatMul: return "matmul";
    case OpTag::Add: return "add";
    case OpTag::Sub: return "sub";
    case OpTag::Mul: return "mul";
    case OpTag::AddBias: return "add_bias";
    case OpTag::Scale: return "scale";
    case OpTag::AddScalar: return "add_scalar";
    case OpTag::Square: return "square";
    case OpTag::Sum: return "sum";
    case OpTag::Mean: return "mean";
    case OpTag::RowSum: return "row_sum";
    case OpTag::ConcatCols: return "concat_cols";
    case OpTag::SliceCols: return "slice_cols";
    case OpTag::Reshape: return "reshape";
    case OpTag::Exp: return "exp";
    case OpTag::Log: return "log";
    case OpTag::Tanh: return "tanh";
    case OpTag::Sin: return "sin";
    case OpTag::Cos: return "cos";
    case OpTag::Elu: return "elu";
    case OpTag::SoftmaxRows: return "softmax_rows";
    case OpTag::Clamp: return "clamp";
    case OpTag::SoftClamp: return "soft_clamp";
    case OpTag::StopGradient: return "stop_gradient";
    case OpTag::StraightThrough: return "straight_through";
    }
    return "?";
}

const Mat& Var::value() const { return tape->node(id).value; }
const Mat& Var::grad() const { return tape->node(id).grad; }

// ---------------------------------------------------------------------------
// Tape

GradSink::GradSink(const Tape& tape)
    : tape_(tape)
    , adjoints_(tape.size())
    , live_(tape.size(), false)
{
}

void GradSink::add(std::size_t id, const Mat& delta)
{
    if (!live_[id]) {
        adjoints_[id] = delta;
        live_[id] = true;
        return;
    }
    adjoints_[id] += delta;
}

Var Tape::parameter(Eigen::Index rows, Eigen::Index cols, std::span<const double> values)
{
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != values.size())
        throw std::invalid_argument("parameter: " + std::to_string(values.size()) + " values for shape " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    Mat m(rows, cols);
    std::copy(values.begin(), values.end(), m.data());
    return parameter(std::move(m));
}

Var Tape::parameter(Mat values)
{
    Var v = record(OpTag::Parameter, std::move(values), {}, {});
    trainable_[v.id] = true;
    return v;
}

Var Tape::constant(Mat values) { return record(OpTag::Constant, std::move(values), {}, {}); }

Var Tape::record(OpTag op, Mat value, std::vector<std::size_t> parents, BackwardFn backward)
{
    TensorNode n;
    n.id = nodes_.size();
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    n.op = op;
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    trainable_.push_back(false);
    return Var{this, nodes_.size() - 1};
}

void Tape::backward(Var root)
{
    if (root.tape != this)
        throw std::logic_error("backward: root is not on this tape");
    const Mat& rv = nodes_[root.id].value;
    if (rv.rows() != 1 || rv.cols() != 1)
        throw std::invalid_argument("backward: root must be 1x1, got " + std::to_string(rv.rows()) + "x" +
                                    std::to_string(rv.cols()));

    GradSink sink(*this);
    sink.add(root.id, Mat::Ones(1, 1));
    for (std::size_t i = root.id + 1; i-- > 0;) {
        if (!sink.live_[i])
            continue;
        const TensorNode& n = nodes_[i];
        if (n.backward)
            n.backward(n, sink.adjoints_[i], sink);
    }
    for (std::size_t i = 0; i <= root.id; ++i)
        if (sink.live_[i])
            nodes_[i].grad += sink.adjoints_[i];
}

void Tape::zero_grads()
{
    for (auto& n : nodes_)
        n.grad.setZero();
}

std::vector<std::size_t> Tape::parameter_ids() const
{
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (trainable_[i])
            ids.push_back(i);
    return ids;
}

// ---------------------------------------------------------------------------
// Value kernels

Mat matmul(const Mat& a, const Mat& b)
{
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch (" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + ")");
    return a * b;
}

Mat add(const Mat& a, const Mat& b)
{
    require_same_shape(a, b, "add");
    return a + b;
}

Mat sub(const Mat& a, const Mat& b)
{
    require_same_shape(a, b, "sub");
    return a - b;
}

Mat mul(const Mat& a, const Mat& b)
{
    require_same_shape(a, b, "mul");
    return a.cwiseProduct(b);
}

Mat add_bias(const Mat& x, const Mat& bias)
{
    if (bias.rows() != 1 || bias.cols() != x.cols())
        throw std::invalid_argument("add_bias: bias must be 1x" + std::to_string(x.cols()));
    return x.rowwise() + bias.row(0);
}

Mat scale(const Mat& x, double c) { return x * c; }

Mat add_scalar(const Mat& x, double c) { return (x.array() + c).matrix(); }

Mat square(const Mat& x) { return x.array().square().matrix(); }

Mat sum(const Mat& x) { return Mat::Constant(1, 1, x.sum()); }

Mat mean(const Mat& x)
{
    if (x.size() == 0)
        throw std::invalid_argument("mean: empty input");
    return Mat::Constant(1, 1, x.sum() / static_cast<double>(x.size()));
}

Mat row_sum(const Mat& x) { return x.rowwise().sum(); }

Mat concat_cols(const std::vector<Mat>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat_cols: no inputs");
    const Eigen::Index rows = parts.front().rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows)
            throw std::invalid_argument("concat_cols: row count mismatch");
        cols += p.cols();
    }
    Mat out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p;
        at += p.cols();
    }
    return out;
}

Mat slice_cols(const Mat& x, Eigen::Index start, Eigen::Index count)
{
    if (start < 0 || count < 0 || start + count > x.cols())
        throw std::invalid_argument("slice_cols: range out of bounds");
    return x.middleCols(start, count);
}

std::vector<Mat> split_cols(const Mat& x, const std::vector<Eigen::Index>& widths)
{
    if (std::accumulate(widths.begin(), widths.end(), Eigen::Index{0}) != x.cols())
        throw std::invalid_argument("split_cols: widths do not cover the input");
    std::vector<Mat> out;
    Eigen::Index at = 0;
    for (auto w : widths) {
        out.push_back(x.middleCols(at, w));
        at += w;
    }
    return out;
}

Mat reshape(const Mat& x, Eigen::Index rows, Eigen::Index cols)
{
    if (rows * cols != x.size())
        throw std::invalid_argument("reshape: size mismatch");
    return Eigen::Map<const Mat>(x.data(), rows, cols);
}

Mat exp_op(const Mat& x) { return x.array().exp().matrix(); }

Mat log_op(const Mat& x)
{
    if ((x.array() <= 0.0).any())
        throw std::domain_error("log: non-positive input");
    return x.array().log().matrix();
}

Mat tanh_op(const Mat& x) { return x.array().tanh().matrix(); }
Mat sin_op(const Mat& x) { return x.array().sin().matrix(); }
Mat cos_op(const Mat& x) { return x.array().cos().matrix(); }

Mat elu(const Mat& x) { return x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); }); }

Mat softmax_rows(const Mat& x)
{
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const double m = x.row(r).maxCoeff();
        out.row(r) = (x.row(r).array() - m).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

Mat clamp(const Mat& x, double lo, double hi) { return x.cwiseMax(lo).cwiseMin(hi); }

Mat soft_clamp(const Mat& x, double linear_limit, double bound)
{
    const double span = bound - linear_limit;
    return x.unaryExpr([=](double v) {
        const double a = std::abs(v);
        if (a <= linear_limit)
            return v;
        return std::copysign(linear_limit + span * std::tanh((a - linear_limit) / span), v);
    });
}

// ---------------------------------------------------------------------------
// Recording overloads

Var matmul(Var a, Var b)
{
    Tape& t = common_tape(a, b);
    return t.record(OpTag::MatMul, matmul(a.value(), b.value()), {a.id, b.id},
                    [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
                        const Mat& A = ta->node(n.parents[0]).value;
                        const Mat& B = ta->node(n.parents[1]).value;
                        s.add(n.parents[0], g * B.transpose());
                        s.add(n.parents[1], A.transpose() * g);
                    });
}

Var add(Var a, Var b)
{
    Tape& t = common_tape(a, b);
    return t.record(OpTag::Add, add(a.value(), b.value()), {a.id, b.id},
                    [](const TensorNode& n, const Mat& g, GradSink& s) {
                        s.add(n.parents[0], g);
                        s.add(n.parents[1], g);
                    });
}

Var sub(Var a, Var b)
{
    Tape& t = common_tape(a, b);
    return t.record(OpTag::Sub, sub(a.value(), b.value()), {a.id, b.id},
                    [](const TensorNode& n, const Mat& g, GradSink& s) {
                        s.add(n.parents[0], g);
                        s.add(n.parents[1], -g);
                    });
}

Var mul(Var a, Var b)
{
    Tape& t = common_tape(a, b);
    return t.record(OpTag::Mul, mul(a.value(), b.value()), {a.id, b.id},
                    [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
                        const Mat& A = ta->node(n.parents[0]).value;
                        const Mat& B = ta->node(n.parents[1]).value;
                        s.add(n.parents[0], g.cwiseProduct(B));
                        s.add(n.parents[1], g.cwiseProduct(A));
                    });
}

Var add_bias(Var x, Var bias)
{
    Tape& t = common_tape(x, bias);
    return t.record(OpTag::AddBias, add_bias(x.value(), bias.value()), {x.id, bias.id},
                    [](const TensorNode& n, const Mat& g, GradSink& s) {
                        s.add(n.parents[0], g);
                        s.add(n.parents[1], g.colwise().sum());
                    });
}

Var scale(Var x, double c)
{
    return tape_of(x).record(OpTag::Scale, scale(x.value(), c), {x.id},
                             [c](const TensorNode& n, const Mat& g, GradSink& s) { s.add(n.parents[0], g * c); });
}

Var add_scalar(Var x, double c)
{
    return tape_of(x).record(OpTag::AddScalar, add_scalar(x.value(), c), {x.id},
                             [](const TensorNode& n, const Mat& g, GradSink& s) { s.add(n.parents[0], g); });
}

Var square(Var x)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::Square, square(x.value()), {x.id}, [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
        const Mat& X = ta->node(n.parents[0]).value;
        s.add(n.parents[0], 2.0 * g.cwiseProduct(X));
    });
}

Var sum(Var x)
{
    return tape_of(x).record(OpTag::Sum, sum(x.value()), {x.id},
                             [r = x.rows(), c = x.cols()](const TensorNode& n, const Mat& g, GradSink& s) {
                                 s.add(n.parents[0], Mat::Constant(r, c, g(0, 0)));
                             });
}

Var mean(Var x)
{
    return tape_of(x).record(OpTag::Mean, mean(x.value()), {x.id},
                             [r = x.rows(), c = x.cols()](const TensorNode& n, const Mat& g, GradSink& s) {
                                 s.add(n.parents[0], Mat::Constant(r, c, g(0, 0) / static_cast<double>(r * c)));
                             });
}

Var row_sum(Var x)
{
    return tape_of(x).record(OpTag::RowSum, row_sum(x.value()), {x.id},
                             [c = x.cols()](const TensorNode& n, const Mat& g, GradSink& s) {
                                 s.add(n.parents[0], g.replicate(1, c));
                             });
}

Var concat_cols(const std::vector<Var>& parts)
{
    if (parts.empty())
        throw std::invalid_argument("concat_cols: no inputs");
    Tape& t = tape_of(parts.front());
    std::vector<Mat> values;
    std::vector<std::size_t> ids;
    std::vector<Eigen::Index> widths;
    for (const auto& p : parts) {
        if (p.tape != &t)
            throw std::logic_error("operands live on different tapes");
        values.push_back(p.value());
        ids.push_back(p.id);
        widths.push_back(p.cols());
    }
    return t.record(OpTag::ConcatCols, concat_cols(values), std::move(ids),
                    [widths](const TensorNode& n, const Mat& g, GradSink& s) {
                        Eigen::Index at = 0;
                        for (std::size_t i = 0; i < widths.size(); ++i) {
                            s.add(n.parents[i], g.middleCols(at, widths[i]));
                            at += widths[i];
                        }
                    });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count)
{
    return tape_of(x).record(OpTag::SliceCols, slice_cols(x.value(), start, count), {x.id},
                             [start, count, r = x.rows(), c = x.cols()](const TensorNode& n, const Mat& g,
                                                                       GradSink& s) {
                                 Mat full = Mat::Zero(r, c);
                                 full.middleCols(start, count) = g;
                                 s.add(n.parents[0], full);
                             });
}

std::vector<Var> split_cols(Var x, const std::vector<Eigen::Index>& widths)
{
    if (std::accumulate(widths.begin(), widths.end(), Eigen::Index{0}) != x.cols())
        throw std::invalid_argument("split_cols: widths do not cover the input");
    std::vector<Var> out;
    Eigen::Index at = 0;
    for (auto w : widths) {
        out.push_back(slice_cols(x, at, w));
        at += w;
    }
    return out;
}

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols)
{
    return tape_of(x).record(OpTag::Reshape, reshape(x.value(), rows, cols), {x.id},
                             [r = x.rows(), c = x.cols()](const TensorNode& n, const Mat& g, GradSink& s) {
                                 s.add(n.parents[0], reshape(g, r, c));
                             });
}

Var exp_op(Var x)
{
    return tape_of(x).record(OpTag::Exp, exp_op(x.value()), {x.id}, [](const TensorNode& n, const Mat& g, GradSink& s) {
        s.add(n.parents[0], g.cwiseProduct(n.value));
    });
}

Var log_op(Var x)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::Log, log_op(x.value()), {x.id}, [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
        const Mat& X = ta->node(n.parents[0]).value;
        s.add(n.parents[0], g.cwiseQuotient(X));
    });
}

Var tanh_op(Var x)
{
    return tape_of(x).record(OpTag::Tanh, tanh_op(x.value()), {x.id}, [](const TensorNode& n, const Mat& g, GradSink& s) {
        s.add(n.parents[0], (g.array() * (1.0 - n.value.array().square())).matrix());
    });
}

Var sin_op(Var x)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::Sin, sin_op(x.value()), {x.id}, [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
        const Mat& X = ta->node(n.parents[0]).value;
        s.add(n.parents[0], (g.array() * X.array().cos()).matrix());
    });
}

Var cos_op(Var x)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::Cos, cos_op(x.value()), {x.id}, [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
        const Mat& X = ta->node(n.parents[0]).value;
        s.add(n.parents[0], (-g.array() * X.array().sin()).matrix());
    });
}

Var elu(Var x)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::Elu, elu(x.value()), {x.id}, [ta = &t](const TensorNode& n, const Mat& g, GradSink& s) {
        const Mat& X = ta->node(n.parents[0]).value;
        // d/dx (e^x - 1) = y + 1 on the negative branch
        Mat d = (X.array() > 0.0).select(Mat::Ones(X.rows(), X.cols()), (n.value.array() + 1.0).matrix());
        s.add(n.parents[0], g.cwiseProduct(d));
    });
}

Var softmax_rows(Var x)
{
    return tape_of(x).record(OpTag::SoftmaxRows, softmax_rows(x.value()), {x.id},
                             [](const TensorNode& n, const Mat& g, GradSink& s) {
                                 const Mat& y = n.value;
                                 Eigen::VectorXd dot = g.cwiseProduct(y).rowwise().sum();
                                 Mat d = y.cwiseProduct(g - dot.replicate(1, y.cols()));
                                 s.add(n.parents[0], d);
                             });
}

Var clamp(Var x, double lo, double hi)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::Clamp, clamp(x.value(), lo, hi), {x.id},
                    [ta = &t, lo, hi](const TensorNode& n, const Mat& g, GradSink& s) {
                        const Mat& X = ta->node(n.parents[0]).value;
                        Mat d = ((X.array() >= lo) && (X.array() <= hi)).select(g, Mat::Zero(g.rows(), g.cols()));
                        s.add(n.parents[0], d);
                    });
}

Var soft_clamp(Var x, double linear_limit, double bound)
{
    Tape& t = tape_of(x);
    return t.record(OpTag::SoftClamp, soft_clamp(x.value(), linear_limit, bound), {x.id},
                    [ta = &t, linear_limit, bound](const TensorNode& n, const Mat& g, GradSink& s) {
                        const Mat& X = ta->node(n.parents[0]).value;
                        const double span = bound - linear_limit;
                        Mat d = X.unaryExpr([=](double v) {
                            const double a = std::abs(v);
                            if (a <= linear_limit)
                                return 1.0;
                            const double th = std::tanh((a - linear_limit) / span);
                            return 1.0 - th * th;
                        });
                        s.add(n.parents[0], g.cwiseProduct(d));
                    });
}

Var stop_gradient(Var x) { return tape_of(x).record(OpTag::StopGradient, x.value(), {x.id}, {}); }

Var straight_through(const Mat& forward, Var surrogate)
{
    require_same_shape(forward, surrogate.value(), "straight_through");
    return tape_of(surrogate).record(OpTag::StraightThrough, forward, {surrogate.id},
                                     [](const TensorNode& n, const Mat& g, GradSink& s) { s.add(n.parents[0], g); });
}

// ---------------------------------------------------------------------------

std::vector<Eigen::Index> argmax_rows(const Mat& x)
{
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()), 0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < x.cols(); ++c)
            if (x(r, c) > x(r, best))
                best = c;
        idx[static_cast<std::size_t>(r)] = best;
    }
    return idx;
}

Mat one_hot_rows(std::span<const Eigen::Index> index, Eigen::Index cols)
{
    Mat out = Mat::Zero(static_cast<Eigen::Index>(index.size()), cols);
    for (std::size_t r = 0; r < index.size(); ++r)
        out(static_cast<Eigen::Index>(r), index[r]) = 1.0;
    return out;
}

bool all_finite(const Mat& x) { return x.allFinite(); }

} // namespace catpol
