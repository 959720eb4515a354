#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "setgen/core/common.hpp"

namespace setgen::ad {

using setgen::Mat;

// Reverse-mode tape over dense Eigen matrices. Each op appends one node
// holding its value and a backward closure; backward() walks the tape in
// reverse. Leaves accumulate into caller-owned grad buffers, so one tape can
// serve a whole minibatch and the caller reads gradients once at the end.
//
// Tapes are single-threaded and reusable via clear().
template <typename S>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf over caller-owned storage. Both buffers must outlive the tape;
    // `grad_sink` is += accumulated (caller zeroes it between batches). A
    // null grad_sink makes the leaf a frozen input (no grad flows).
    int leaf(const Mat<S>* value, Mat<S>* grad_sink) {
        Node n;
        n.ext_val = value;
        n.ext_grad = grad_sink;
        n.needs_grad = grad_sink != nullptr;
        nodes_.push_back(std::move(n));
        return last();
    }

    // Non-differentiable input; value is copied in.
    int constant(Mat<S> value) {
        Node n;
        n.value = std::move(value);
        nodes_.push_back(std::move(n));
        return last();
    }

    template <typename F>
    int make(Mat<S> value, bool needs_grad, F&& back) {
        Node n;
        n.value = std::move(value);
        n.needs_grad = needs_grad;
        if (needs_grad) n.back = std::forward<F>(back);
        nodes_.push_back(std::move(n));
        return last();
    }

    const Mat<S>& val(int id) const {
        const Node& n = nodes_[id];
        return n.ext_val ? *n.ext_val : n.value;
    }

    bool needs_grad(int id) const { return nodes_[id].needs_grad; }

    Mat<S>& grad(int id) {
        Node& n = nodes_[id];
        return n.ext_grad ? *n.ext_grad : n.gstore;
    }

    // Add `g` to the gradient of `id` if it participates in differentiation.
    template <typename Expr>
    void acc(int id, const Expr& g) {
        if (nodes_[id].needs_grad) grad(id) += g;
    }

    void backward(int loss_id) {
        const auto& lv = val(loss_id);
        require(lv.rows() == 1 && lv.cols() == 1, "backward: loss must be 1x1");
        require(nodes_[loss_id].needs_grad, "backward: loss does not depend on any leaf");
        for (int i = 0; i <= loss_id; ++i) {
            Node& n = nodes_[i];
            if (n.needs_grad && !n.ext_grad) n.gstore = Mat<S>::Zero(val(i).rows(), val(i).cols());
        }
        grad(loss_id)(0, 0) += S(1);
        for (int i = loss_id; i >= 0; --i) {
            if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back(*this, i);
        }
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat<S> value;                      // interior value
        const Mat<S>* ext_val = nullptr;   // set for leaves
        Mat<S> gstore;                     // interior grad
        Mat<S>* ext_grad = nullptr;        // set for leaves
        bool needs_grad = false;
        // Backward closure; receives the tape and the node's own id.
        std::function<void(Tape&, int)> back;
    };

    int last() const { return static_cast<int>(nodes_.size()) - 1; }

    std::vector<Node> nodes_;
};

// Lightweight handle used by the op library below.
template <typename S>
struct Var {
    Tape<S>* tape = nullptr;
    int id = -1;

    Var() = default;
    Var(Tape<S>& t, int i) : tape(&t), id(i) {}

    const Mat<S>& val() const { return tape->val(id); }
    Eigen::Index rows() const { return val().rows(); }
    Eigen::Index cols() const { return val().cols(); }
    bool needs_grad() const { return tape->needs_grad(id); }
};

}  // namespace setgen::ad
