#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vreg/tensor.hpp"

namespace vreg {

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const std::vector<int>& shape() const;
};

// Reverse-mode autodiff tape. Nodes are appended in execution order, which is
// a topological order by construction; backward() walks them in reverse.
// A tape is single-threaded: one training step owns one tape. Parallelism
// happens inside the kernels, never across tape operations.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad);

    // Records an op result. backward_fn may be empty for non-differentiable
    // results; it receives the tape and the node's own id and accumulates
    // into the input nodes' gradient buffers.
    Var record(const char* op, Tensor value, std::vector<int> inputs,
               std::function<void(Tape&, int)> backward_fn);

    // Seeds the scalar loss with gradient 1 and sweeps the tape in reverse.
    // After this the tape is consumed: gradients may be read but no further
    // ops may be recorded until reset().
    void backward(Var loss);

    void reset();

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Gradient of a node, or nullptr if it does not require one / was never
    // reached by the sweep.
    const Tensor* grad(Var v) const;
    Tensor grad_or_zeros(Var v) const;

    // Lazily allocated accumulation buffer; nullptr when the node does not
    // require gradients. Used by backward closures.
    double* grad_data(int id);

    std::size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_allocated = false;
        std::vector<int> inputs;
        std::function<void(Tape&, int)> backward_fn;
        const char* op = "";
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

// Elementwise and structural ops. Binary ops require exactly matching shapes;
// there is no broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var scale(Var a, double c);
Var vexp(Var a);
Var vabs(Var a);
Var square(Var a);
Var leaky_relu(Var a, double slope);
Var clamp_min(Var a, double floor_value);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Full reductions to a scalar (shape [1]).
Var vsum(Var a);
Var vmean(Var a);

Var reshape(Var a, std::vector<int> shape);

// Channel-leading tensors: [C, spatial...].
Var concat_channels(Var a, Var b);
Var channel_max(Var a);                 // [C, s...] -> [1, s...], argmax routing
Var add_channel_bias(Var x, Var bias);  // bias shape [C]

// Cross-correlation with zero padding. input [Cin, s...], kernels
// [Cout, Cin, k...] with odd k, stride in {1, 2}. With same padding the
// output extent is ceil(extent / stride).
enum class Padding { same, valid };
Var conv(Var input, Var kernels, int stride, Padding padding);

// Nearest-neighbour upsampling of the trailing spatial_rank axes; factor
// must be 2. Leading axes, if any, are treated as channels.
Var upsample_nearest(Var a, int factor, int spatial_rank);

// Spatial ops on rank-d tensors (d = 2 or 3), no channel axis.
Var shift_clamped(Var a, const std::vector<int>& offset); // clamp-to-edge sampling
Var patch_filter(Var a, Tensor weights, int radius);      // replicate-border weighted patch sum
Var axis_diff(Var a, int axis);                           // forward difference, extent-1 on axis

// Differentiable backward warp: image rank d, field [d, s...] in voxel
// units; samples at x + field(x) with multi-linear interpolation and
// clamp-to-edge borders.
Var warp(Var image, Var field);

} // namespace vreg
