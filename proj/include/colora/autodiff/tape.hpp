#pragma once

#include <functional>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace colora::ad {

using Mat = Eigen::MatrixXd;

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode tape over matrix-valued nodes.
///
/// Nodes are appended in evaluation order, so operands always precede their
/// users and one reverse pass over the node list visits each node once. The
/// primitive set is closed: every op is an alternative of `Op` and the backward
/// pass is an exhaustive std::visit, so a missing rule fails to compile.
class Tape {
 public:
  struct Leaf {};
  struct Constant {};
  struct MatMul { int a, b; };
  struct Add { int a, b; };
  struct Sub { int a, b; };
  struct AddCol { int a, col; };  // a + col * 1^T
  struct Mul { int a, b; };
  struct MulCol { int a, col; };  // diag(col) * a
  struct Scale { int a; double s; };
  struct Swish { int a; Mat sig; };  // sigmoid of the input, kept for backward
  struct Sin { int a; };
  struct Cos { int a; };
  struct Exp { int a; };
  struct PowInt { int a; int n; };
  struct Reciprocal { int a; };
  struct Sum { int a; };
  struct GatherCols { int a; std::vector<int> idx; };
  struct SelectRows { int a; std::vector<int> idx; };  // -1 yields a zero row
  struct Slice { int a; Eigen::Index offset, rows, cols; };  // row-major block of a column vector

  using Op = std::variant<Leaf, Constant, MatMul, Add, Sub, AddCol, Mul, MulCol, Scale, Swish, Sin, Cos,
                          Exp, PowInt, Reciprocal, Sum, GatherCols, SelectRows, Slice>;

  Var leaf(Mat value);
  Var constant(Mat value);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var add_col(Var a, Var col);
  Var mul(Var a, Var b);
  Var mul_col(Var a, Var col);
  Var scale(Var a, double s);
  Var swish(Var a);
  Var sin(Var a);
  Var cos(Var a);
  Var exp(Var a);
  Var pow(Var a, int n);
  Var reciprocal(Var a);
  Var sum(Var a);
  Var gather_cols(Var a, std::vector<int> idx);
  Var select_rows(Var a, std::vector<int> idx);
  /// View a (rows*cols)-long segment of a column vector as a row-major matrix.
  Var slice(Var a, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols);

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  /// Gradient of the last backward() root with respect to v (zero-sized if unreached).
  const Mat& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  double scalar(Var v) const { return value(v)(0, 0); }

  /// Reverse sweep from a 1x1 root.
  void backward(Var root);

  /// Drops all nodes; keeps allocated capacity.
  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    Mat value;
    Mat grad;
    bool needs_grad = false;
  };

  Var push(Op op, Mat value, bool needs_grad);
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void accumulate(int id, Mat g);

  std::vector<Node> nodes_;
};

/// Gradient of a scalar function of a flat parameter vector.
/// `f` receives the tape and a (n x 1) leaf holding `params`, and returns a 1x1 node.
Eigen::VectorXd grad(const std::function<Var(Tape&, Var)>& f, const Eigen::VectorXd& params);

}  // namespace colora::ad
