#pragma once

#include <functional>
#include <vector>

#include "emoloc/tensor.hpp"

namespace emoloc::ad {

class Graph;

// Handle to one node of a Graph. Cheap to copy; valid for the graph's
// lifetime. val() returns a reference into the graph's node storage, so do
// not hold it across the creation of further nodes.
struct Value {
    Graph* graph = nullptr;
    int id = -1;

    const Tensor& val() const;
    double scalar() const;
};

// A recorded forward computation. Nodes are appended in evaluation order
// (every node's inputs precede it), forward values are computed eagerly at
// node creation, and backward() replays the record once in reverse.
//
// A graph and its tensors belong to one thread for the duration of a
// forward/backward pass; independent graphs may live on separate threads.
class Graph {
public:
    struct Node {
        Tensor value;
        std::vector<int> inputs;
        // Accumulates into grads of this node's inputs; null for leaves.
        std::function<void(Graph&, int)> backward;
    };

    // Inserts a constant/parameter snapshot.
    Value leaf(Tensor t);

    int size() const { return static_cast<int>(nodes.size()); }
    const Tensor& value(int id) const { return nodes[static_cast<size_t>(id)].value; }

    // Reverse-mode sweep from a scalar loss. Returns one gradient per node
    // id (zeros where the loss does not depend on the node). Gradients
    // accumulate across fan-out.
    std::vector<Tensor> backward(Value loss);

    // Incremented whenever cosine() meets a zero-norm operand.
    size_t degenerate_cosine_count = 0;

    std::vector<Node> nodes;
    std::vector<Tensor> grads;  // populated during backward()
};

// ---- primitive operations --------------------------------------------
// Elementwise ops require identical shapes and throw DimensionError
// otherwise. All are differentiable; relu takes subgradient 0 at 0.

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);  // Hadamard
Value div(Value a, Value b);
Value scale(Value x, double c);
Value add_scalar(Value x, double c);
Value sigmoid(Value x);
Value relu(Value x);
Value log(Value x);

// out[i,j] = sum_k x[i,k]*w[j,k] + bias[j]   (x: a*b, w: c*b, bias: c)
Value affine(Value x, Value w, Value bias);
Value matmul(Value a, Value b);     // a*b with inner dims matching
Value matmul_nt(Value a, Value b);  // a * b^T
Value transpose(Value x);

// Temporal cross-correlation, stride 2, symmetric zero padding (k-1)/2.
// x: T*d_in, kernels: d_out*k*d_in, bias: d_out; output (T/2)*d_out.
// T must be even; k must be odd.
Value conv1d_stride2(Value x, Value kernels, Value bias);

// Row softmax with per-row max subtraction. Rows sum to 1.
Value softmax_rows(Value x);

Value concat_last_dim(Value a, Value b);
Value slice_rows(Value x, int row_begin, int row_end);
Value stack_scalars(Graph& g, const std::vector<Value>& xs);  // -> 1*n
Value reshape(Value x, std::vector<int> shape);

Value sum_all(Value x);                // -> scalar
Value sq_euclidean(Value a, Value b);  // sum((a-b)^2) -> scalar
Value l2_norm_rows(Value x);           // a*b -> a (per-row Euclidean norm)
Value max_pool_rows(Value x);          // a*b -> b (per-column max over rows)

// Cosine similarity of two same-shape tensors viewed as flat vectors.
// A zero-norm operand yields 0 and bumps the graph's diagnostics counter.
Value cosine(Value a, Value b);

}  // namespace emoloc::ad
