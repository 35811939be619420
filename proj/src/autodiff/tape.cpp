#include "colora/autodiff/tape.hpp"

#include <cmath>
#include <string>

#include "colora/autodiff/dual2.hpp"
#include "colora/error.hpp"

namespace colora::ad {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw InvalidInput(std::string("tape ") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
}

// exp(-z) overflows to inf for very negative z, which still yields sigmoid 0.
Mat sigmoid_of(const Mat& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

}  // namespace

Var Tape::push(Op op, Mat value, bool needs_grad) {
  nodes_.push_back(Node{std::move(op), std::move(value), Mat(), needs_grad});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Mat value) { return push(Leaf{}, std::move(value), true); }
Var Tape::constant(Mat value) { return push(Constant{}, std::move(value), false); }

Var Tape::matmul(Var a, Var b) {
  const Mat& va = value(a);
  const Mat& vb = value(b);
  if (va.cols() != vb.rows()) throw InvalidInput("tape matmul: inner dimension mismatch");
  Mat out;
  out.noalias() = va * vb;
  return push(MatMul{a.id, b.id}, std::move(out), needs(a.id) || needs(b.id));
}

Var Tape::add(Var a, Var b) {
  check_same_shape(value(a), value(b), "add");
  return push(Add{a.id, b.id}, value(a) + value(b), needs(a.id) || needs(b.id));
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(value(a), value(b), "sub");
  return push(Sub{a.id, b.id}, value(a) - value(b), needs(a.id) || needs(b.id));
}

Var Tape::add_col(Var a, Var col) {
  const Mat& va = value(a);
  const Mat& vc = value(col);
  if (vc.cols() != 1 || vc.rows() != va.rows()) throw InvalidInput("tape add_col: bad column shape");
  Mat out = va.colwise() + vc.col(0);
  return push(AddCol{a.id, col.id}, std::move(out), needs(a.id) || needs(col.id));
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(value(a), value(b), "mul");
  return push(Mul{a.id, b.id}, value(a).cwiseProduct(value(b)), needs(a.id) || needs(b.id));
}

Var Tape::mul_col(Var a, Var col) {
  const Mat& va = value(a);
  const Mat& vc = value(col);
  if (vc.cols() != 1 || vc.rows() != va.rows()) throw InvalidInput("tape mul_col: bad column shape");
  Mat out = vc.col(0).asDiagonal() * va;
  return push(MulCol{a.id, col.id}, std::move(out), needs(a.id) || needs(col.id));
}

Var Tape::scale(Var a, double s) { return push(Scale{a.id, s}, value(a) * s, needs(a.id)); }

Var Tape::swish(Var a) {
  const Mat& z = value(a);
  Mat sig = sigmoid_of(z);
  Mat out = z.cwiseProduct(sig);
  return push(Swish{a.id, std::move(sig)}, std::move(out), needs(a.id));
}

Var Tape::sin(Var a) { return push(Sin{a.id}, value(a).array().sin().matrix(), needs(a.id)); }
Var Tape::cos(Var a) { return push(Cos{a.id}, value(a).array().cos().matrix(), needs(a.id)); }
Var Tape::exp(Var a) { return push(Exp{a.id}, value(a).array().exp().matrix(), needs(a.id)); }

Var Tape::pow(Var a, int n) {
  Mat out = value(a).unaryExpr([n](double v) { return std::pow(v, n); });
  return push(PowInt{a.id, n}, std::move(out), needs(a.id));
}

Var Tape::reciprocal(Var a) {
  return push(Reciprocal{a.id}, value(a).cwiseInverse(), needs(a.id));
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(Sum{a.id}, std::move(out), needs(a.id));
}

Var Tape::gather_cols(Var a, std::vector<int> idx) {
  const Mat& va = value(a);
  Mat out(va.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= va.cols()) throw InvalidInput("tape gather_cols: index out of range");
    out.col(static_cast<Eigen::Index>(j)) = va.col(idx[j]);
  }
  return push(GatherCols{a.id, std::move(idx)}, std::move(out), needs(a.id));
}

Var Tape::select_rows(Var a, std::vector<int> idx) {
  const Mat& va = value(a);
  Mat out = Mat::Zero(static_cast<Eigen::Index>(idx.size()), va.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= va.rows()) throw InvalidInput("tape select_rows: index out of range");
    if (idx[i] >= 0) out.row(static_cast<Eigen::Index>(i)) = va.row(idx[i]);
  }
  return push(SelectRows{a.id, std::move(idx)}, std::move(out), needs(a.id));
}

Var Tape::slice(Var a, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  const Mat& va = value(a);
  if (va.cols() != 1 || offset < 0 || offset + rows * cols > va.rows())
    throw InvalidInput("tape slice: segment out of range");
  Mat out = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      va.data() + offset, rows, cols);
  return push(Slice{a.id, offset, rows, cols}, std::move(out), needs(a.id));
}

void Tape::accumulate(int id, Mat g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = std::move(g);
  else
    n.grad += g;
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw InvalidInput("tape backward: root must be 1x1");
  for (Node& n : nodes_) n.grad.resize(0, 0);
  nodes_[static_cast<std::size_t>(root.id)].grad = Mat::Ones(1, 1);

  for (int id = root.id; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    Mat g = std::move(node.grad);
    std::visit(
        Overloaded{
            [](const Leaf&) {},
            [](const Constant&) {},
            [&](const MatMul& op) {
              if (needs(op.a)) accumulate(op.a, g * value(Var{op.b}).transpose());
              if (needs(op.b)) accumulate(op.b, value(Var{op.a}).transpose() * g);
            },
            [&](const Add& op) {
              accumulate(op.a, g);
              accumulate(op.b, g);
            },
            [&](const Sub& op) {
              accumulate(op.a, g);
              if (needs(op.b)) accumulate(op.b, -g);
            },
            [&](const AddCol& op) {
              accumulate(op.a, g);
              if (needs(op.col)) accumulate(op.col, g.rowwise().sum());
            },
            [&](const Mul& op) {
              if (needs(op.a)) accumulate(op.a, g.cwiseProduct(value(Var{op.b})));
              if (needs(op.b)) accumulate(op.b, g.cwiseProduct(value(Var{op.a})));
            },
            [&](const MulCol& op) {
              const Mat& col = value(Var{op.col});
              if (needs(op.a)) accumulate(op.a, col.col(0).asDiagonal() * g);
              if (needs(op.col)) accumulate(op.col, g.cwiseProduct(value(Var{op.a})).rowwise().sum());
            },
            [&](const Scale& op) { accumulate(op.a, g * op.s); },
            [&](const Swish& op) {
              const auto z = value(Var{op.a}).array();
              const auto s = op.sig.array();
              accumulate(op.a, (g.array() * (s + z * s * (1.0 - s))).matrix());
            },
            [&](const Sin& op) {
              accumulate(op.a, g.cwiseProduct(value(Var{op.a}).array().cos().matrix()));
            },
            [&](const Cos& op) {
              accumulate(op.a, -g.cwiseProduct(value(Var{op.a}).array().sin().matrix()));
            },
            [&](const Exp& op) { accumulate(op.a, g.cwiseProduct(node.value)); },
            [&](const PowInt& op) {
              const int n = op.n;
              const Mat d = value(Var{op.a}).unaryExpr(
                  [n](double v) { return n == 0 ? 0.0 : n * std::pow(v, n - 1); });
              accumulate(op.a, g.cwiseProduct(d));
            },
            [&](const Reciprocal& op) {
              accumulate(op.a, -g.cwiseProduct(node.value.cwiseProduct(node.value)));
            },
            [&](const Sum& op) {
              const Mat& a = value(Var{op.a});
              accumulate(op.a, Mat::Constant(a.rows(), a.cols(), g(0, 0)));
            },
            [&](const GatherCols& op) {
              const Mat& a = value(Var{op.a});
              Mat ga = Mat::Zero(a.rows(), a.cols());
              for (std::size_t j = 0; j < op.idx.size(); ++j)
                ga.col(op.idx[j]) += g.col(static_cast<Eigen::Index>(j));
              accumulate(op.a, ga);
            },
            [&](const SelectRows& op) {
              const Mat& a = value(Var{op.a});
              Mat ga = Mat::Zero(a.rows(), a.cols());
              for (std::size_t i = 0; i < op.idx.size(); ++i)
                if (op.idx[i] >= 0) ga.row(op.idx[i]) += g.row(static_cast<Eigen::Index>(i));
              accumulate(op.a, ga);
            },
            [&](const Slice& op) {
              const Mat& a = value(Var{op.a});
              Mat ga = Mat::Zero(a.rows(), 1);
              Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                  ga.data() + op.offset, op.rows, op.cols) = g;
              accumulate(op.a, ga);
            },
        },
        node.op);
    node.grad = std::move(g);
  }
}

Eigen::VectorXd grad(const std::function<Var(Tape&, Var)>& f, const Eigen::VectorXd& params) {
  Tape tape;
  const Var p = tape.leaf(params);
  const Var out = f(tape, p);
  tape.backward(out);
  const Mat& g = tape.grad(p);
  if (g.size() == 0) return Eigen::VectorXd::Zero(params.size());
  return g.col(0);
}

}  // namespace colora::ad
