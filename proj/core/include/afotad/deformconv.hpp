#pragma once

#include <cstdint>
#include <utility>

#include "afotad/tensor.hpp"

namespace afotad {

// Modulated temporal deformable convolution:
//
//   y(p) = bias + sum_k w_k * x~(p + p_k + dp_k(p)) * dm_k(p)
//
// with pre-specified taps p_k in {-(K-1)/2, ..., (K-1)/2}, per-location
// learnable offsets dp [K x T] and modulation scalars dm [K x T] shared
// across channels. x~ is linear interpolation between the two nearest
// integer positions and contributes exactly zero outside [0, T-1].
//
// Gradients flow to input, weight, bias, dp (through the interpolation
// weights) and dm. At exact integer sampling positions the derivative of the
// interpolation follows the left interval.
Tensor deform_conv1d(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias,
                     const Tensor& offsets, const Tensor& modulation);

// A deformable layer bundling the main kernel with the two small standard
// convolutions predicting offsets and modulation logits. Both branches are
// zero-initialized so a fresh layer starts in the standard-convolution
// regime: dp = 0 everywhere and dm = sigmoid(0) = 0.5.
struct DeformConv1d {
  Tensor weight;   // [Cout x Cin x K]
  Tensor bias;     // [Cout]
  Tensor offset_weight;      // [K x Cin x Kb]
  Tensor offset_bias;        // [K]
  Tensor modulation_weight;  // [K x Cin x Kb]
  Tensor modulation_bias;    // [K]

  static DeformConv1d create(int in_channels, int out_channels, int kernel,
                             int branch_kernel = 3);

  // (dp [K x T], dm [K x T]); dm is sigmoid-activated.
  std::pair<Tensor, Tensor> predict_offsets(Graph& g, const Tensor& input) const;

  Tensor forward(Graph& g, const Tensor& input) const;
};

}  // namespace afotad
