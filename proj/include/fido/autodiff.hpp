#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "fido/tensor.hpp"

namespace fido::ag {

enum class Op {
    leaf,
    add,
    mul,
    matmul,
    conv2d,
    relu,
    sigmoid,
    log,
    exp,
    abs,
    square,
    clamp,
    sum,
    mean,
    max_pool,
    avg_pool,
    softmax,
    mix,
    upsample,
    reshape,
    tv,
};

const char* op_name(Op op);

struct Node {
    Op op = Op::leaf;
    Tensor value;
    Tensor grad;  // same shape as value; allocated per backward pass
    std::vector<Node*> inputs;
    std::function<void()> backward_fn;  // accumulates into inputs' grads
    bool reachable = false;             // scratch used by Graph::backward
};

// Define-by-run reverse-mode graph. Nodes are created in topological order,
// so a reverse sweep over creation order is a valid backward schedule. One
// graph per objective evaluation; graphs are never shared across threads.
class Graph {
  public:
    Node* leaf(Tensor v);
    Node* constant(Tensor v) { return leaf(std::move(v)); }

    // Elementwise; operands must have equal shapes, or one may be a scalar
    // (single element) broadcast against the other.
    Node* add(Node* a, Node* b);
    Node* mul(Node* a, Node* b);

    // Sugar built from mul/add with scalar constants.
    Node* scale(Node* x, double s);
    Node* shift(Node* x, double s);
    Node* sub(Node* a, Node* b) { return add(a, scale(b, -1.0)); }
    Node* one_minus(Node* x) { return shift(scale(x, -1.0), 1.0); }

    Node* matmul(Node* a, Node* b);  // (m,k) x (k,n) -> (m,n)

    // x: (C,H,W), kernel: (OC,C,KH,KW), optional bias: (OC). Valid padding.
    Node* conv2d(Node* x, Node* kernel, Node* bias, int stride = 1);

    Node* relu(Node* x);
    Node* sigmoid(Node* x);
    Node* log(Node* x);
    Node* exp(Node* x);
    Node* abs(Node* x);
    Node* square(Node* x);
    Node* clamp(Node* x, double lo, double hi);

    Node* sum(Node* x);   // -> scalar (1)
    Node* mean(Node* x);  // -> scalar (1)

    // (C,H,W) -> (C,H/f,W/f), floor division; trailing rows/cols beyond the
    // last full window are ignored. max_pool ties go to the first maximal
    // element in row-major window order.
    Node* max_pool(Node* x, int factor);
    Node* avg_pool(Node* x, int factor);

    // Softmax over all elements (logit vectors are 1-D here).
    Node* softmax(Node* x);

    // z*x + (1-z)*xhat. x and xhat share a shape; z either matches it or is
    // an (H,W) map shared across the channels of a (C,H,W) image.
    Node* mix(Node* x, Node* xhat, Node* z);

    // Bilinear resize to (out_h, out_w), align-corners-false convention with
    // edge clamping. Input (H,W) or (C,H,W). Backward is the exact transpose.
    Node* upsample_bilinear(Node* x, int out_h, int out_w);

    Node* reshape(Node* x, Shape shape);

    // Mean over adjacent (right and down) pairs of squared differences of a
    // 2-D map. 1x1 maps have no pairs and give 0.
    Node* tv2d(Node* x);

    // Computes d(root)/d(node) for every node reachable from the scalar
    // root. Gradients are zeroed first, so repeated calls are idempotent.
    void backward(Node* root);

    size_t size() const { return nodes_.size(); }

  private:
    Node* make(Op op, Tensor value, std::vector<Node*> inputs);

    std::deque<Node> nodes_;
};

}  // namespace fido::ag
