#include "afotad/deformconv.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "afotad/ops.hpp"

namespace afotad {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Linear interpolation index pair for a fractional position. i0 = ceil(pos)-1
// makes integer positions land with frac = 1, so the derivative w.r.t. pos is
// taken over the left interval there.
struct SamplePoint {
  std::int64_t i0;
  double frac;
};

inline SamplePoint sample_point(double pos) {
  const std::int64_t i0 = static_cast<std::int64_t>(std::ceil(pos)) - 1;
  return {i0, pos - static_cast<double>(i0)};
}

inline double read_or_zero(const double* row, std::int64_t i, std::int64_t t_len) {
  return (i >= 0 && i < t_len) ? row[i] : 0.0;
}

}  // namespace

Tensor deform_conv1d(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias,
                     const Tensor& offsets, const Tensor& modulation) {
  require(input.rank() == 2, "deform_conv1d: input must be [Cin x T], got " +
                                 shape_to_string(input.shape()));
  require(weight.rank() == 3, "deform_conv1d: weight must be [Cout x Cin x K], got " +
                                  shape_to_string(weight.shape()));
  const int cin = input.dim(0);
  const int t_len = input.dim(1);
  const int cout = weight.dim(0);
  const int k_len = weight.dim(2);
  require(weight.dim(1) == cin, "deform_conv1d: weight expects " +
                                    std::to_string(weight.dim(1)) + " input channels, input has " +
                                    std::to_string(cin));
  require(k_len % 2 == 1, "deform_conv1d: kernel size must be odd, got " + std::to_string(k_len));
  require(t_len >= k_len, "deform_conv1d: temporal length " + std::to_string(t_len) +
                              " shorter than kernel " + std::to_string(k_len));
  require(bias.rank() == 1 && bias.dim(0) == cout,
          "deform_conv1d: bias must be [Cout], got " + shape_to_string(bias.shape()));
  require(offsets.rank() == 2 && offsets.dim(0) == k_len && offsets.dim(1) == t_len,
          "deform_conv1d: offsets must be [K x T] = [" + std::to_string(k_len) + "x" +
              std::to_string(t_len) + "], got " + shape_to_string(offsets.shape()));
  require(modulation.same_shape(offsets), "deform_conv1d: modulation must match offsets shape " +
                                              shape_to_string(offsets.shape()));

  const int half = (k_len - 1) / 2;
  Tensor out = Tensor::zeros({cout, t_len});
  {
    const double* x = input.data();
    const double* w = weight.data();
    const double* b = bias.data();
    const double* dp = offsets.data();
    const double* dm = modulation.data();
    double* y = out.data();
    for (int p = 0; p < t_len; ++p) {
      for (int k = 0; k < k_len; ++k) {
        const double pos = p + (k - half) + dp[static_cast<size_t>(k) * t_len + p];
        const auto [i0, f] = sample_point(pos);
        const double m = dm[static_cast<size_t>(k) * t_len + p];
        for (int ci = 0; ci < cin; ++ci) {
          const double* xrow = x + static_cast<size_t>(ci) * t_len;
          const double v =
              (1.0 - f) * read_or_zero(xrow, i0, t_len) + f * read_or_zero(xrow, i0 + 1, t_len);
          const double vm = v * m;
          for (int co = 0; co < cout; ++co) {
            y[static_cast<size_t>(co) * t_len + p] +=
                w[(static_cast<size_t>(co) * cin + ci) * k_len + k] * vm;
          }
        }
      }
      for (int co = 0; co < cout; ++co) y[static_cast<size_t>(co) * t_len + p] += b[co];
    }
  }

  Tensor in_t = input, w_t = weight, b_t = bias, dp_t = offsets, dm_t = modulation, out_t = out;
  g.record({input, weight, bias, offsets, modulation}, out,
           [in_t, w_t, b_t, dp_t, dm_t, out_t, cin, t_len, cout, k_len, half]() mutable {
             const double* gy = out_t.grad().data();
             const double* x = in_t.data();
             const double* w = w_t.data();
             const double* dp = dp_t.data();
             const double* dm = dm_t.data();
             double* gx = in_t.grad().data();
             double* gw = w_t.grad().data();
             double* gb = b_t.grad().data();
             double* gdp = dp_t.grad().data();
             double* gdm = dm_t.grad().data();

             for (int p = 0; p < t_len; ++p) {
               for (int co = 0; co < cout; ++co) gb[co] += gy[static_cast<size_t>(co) * t_len + p];
               for (int k = 0; k < k_len; ++k) {
                 const size_t kp = static_cast<size_t>(k) * t_len + p;
                 const double pos = p + (k - half) + dp[kp];
                 const auto [i0, f] = sample_point(pos);
                 const double m = dm[kp];
                 for (int ci = 0; ci < cin; ++ci) {
                   const double* xrow = x + static_cast<size_t>(ci) * t_len;
                   double* gxrow = gx + static_cast<size_t>(ci) * t_len;
                   const double x0 = read_or_zero(xrow, i0, t_len);
                   const double x1 = read_or_zero(xrow, i0 + 1, t_len);
                   const double v = (1.0 - f) * x0 + f * x1;

                   // sum over output channels of gy * w for this (ci, k, p)
                   double gsum = 0.0;
                   for (int co = 0; co < cout; ++co) {
                     const double gyv = gy[static_cast<size_t>(co) * t_len + p];
                     gw[(static_cast<size_t>(co) * cin + ci) * k_len + k] += gyv * v * m;
                     gsum += gyv * w[(static_cast<size_t>(co) * cin + ci) * k_len + k];
                   }
                   gdm[kp] += gsum * v;
                   gdp[kp] += gsum * m * (x1 - x0);
                   if (i0 >= 0 && i0 < t_len) gxrow[i0] += gsum * m * (1.0 - f);
                   if (i0 + 1 >= 0 && i0 + 1 < t_len) gxrow[i0 + 1] += gsum * m * f;
                 }
               }
             }
           });
  return out;
}

DeformConv1d DeformConv1d::create(int in_channels, int out_channels, int kernel,
                                  int branch_kernel) {
  require(kernel % 2 == 1, "DeformConv1d: kernel size must be odd, got " + std::to_string(kernel));
  DeformConv1d layer;
  layer.weight = Tensor::zeros({out_channels, in_channels, kernel});
  layer.bias = Tensor::zeros({out_channels});
  layer.offset_weight = Tensor::zeros({kernel, in_channels, branch_kernel});
  layer.offset_bias = Tensor::zeros({kernel});
  layer.modulation_weight = Tensor::zeros({kernel, in_channels, branch_kernel});
  layer.modulation_bias = Tensor::zeros({kernel});
  return layer;
}

std::pair<Tensor, Tensor> DeformConv1d::predict_offsets(Graph& g, const Tensor& input) const {
  Tensor dp = conv1d(g, input, offset_weight, offset_bias, 1);
  Tensor dm = sigmoid(g, conv1d(g, input, modulation_weight, modulation_bias, 1));
  return {dp, dm};
}

Tensor DeformConv1d::forward(Graph& g, const Tensor& input) const {
  auto [dp, dm] = predict_offsets(g, input);
  return deform_conv1d(g, input, weight, bias, dp, dm);
}

}  // namespace afotad
