#pragma once

#include "afotad/tensor.hpp"

namespace afotad {

// Temporal cross-correlation with zero padding sized so the output length
// equals the input length. input [Cin x T], weight [Cout x Cin x K] with K
// odd, bias [Cout], dilation >= 1. Output [Cout x T].
Tensor conv1d(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int dilation = 1);

// Per-channel temporal max over non-overlapping windows of 2 (stride 2).
// T must be even; gradient routes to the first argmax of each window.
Tensor maxpool1d(Graph& g, const Tensor& input);

// Column-wise softmax of a [C x T] tensor with max subtraction.
Tensor softmax_columns(Graph& g, const Tensor& input);

Tensor exp(Graph& g, const Tensor& input);
Tensor relu(Graph& g, const Tensor& input);  // subgradient at 0 is 0
Tensor sigmoid(Graph& g, const Tensor& input);

Tensor add(Graph& g, const Tensor& a, const Tensor& b);  // same shape
Tensor mul(Graph& g, const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(Graph& g, const Tensor& input, double factor);
// Multiply every element by a trainable scalar tensor; gradient flows to both.
Tensor scale_by(Graph& g, const Tensor& input, const Tensor& factor);

Tensor sum(Graph& g, const Tensor& input);  // -> scalar

}  // namespace afotad
