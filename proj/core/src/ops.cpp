#include "afotad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "afotad/errors.hpp"

namespace afotad {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

Tensor conv1d(Graph& g, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int dilation) {
  require(input.rank() == 2, "conv1d: input must be [Cin x T], got " +
                                 shape_to_string(input.shape()));
  require(weight.rank() == 3, "conv1d: weight must be [Cout x Cin x K], got " +
                                  shape_to_string(weight.shape()));
  require(bias.rank() == 1, "conv1d: bias must be [Cout], got " + shape_to_string(bias.shape()));
  const int cin = input.dim(0);
  const int t_len = input.dim(1);
  const int cout = weight.dim(0);
  const int k_len = weight.dim(2);
  require(weight.dim(1) == cin, "conv1d: weight expects " + std::to_string(weight.dim(1)) +
                                    " input channels, input has " + std::to_string(cin));
  require(bias.dim(0) == cout, "conv1d: bias length " + std::to_string(bias.dim(0)) +
                                   " != output channels " + std::to_string(cout));
  require(k_len % 2 == 1, "conv1d: kernel size must be odd, got " + std::to_string(k_len));
  require(dilation >= 1, "conv1d: dilation must be >= 1, got " + std::to_string(dilation));

  const int half = (k_len - 1) / 2;
  Tensor out = Tensor::zeros({cout, t_len});
  {
    const double* x = input.data();
    const double* w = weight.data();
    const double* b = bias.data();
    double* y = out.data();
    for (int co = 0; co < cout; ++co) {
      for (int t = 0; t < t_len; ++t) {
        double acc = b[co];
        for (int ci = 0; ci < cin; ++ci) {
          const double* wrow = w + (static_cast<size_t>(co) * cin + ci) * k_len;
          const double* xrow = x + static_cast<size_t>(ci) * t_len;
          for (int k = 0; k < k_len; ++k) {
            const int s = t + (k - half) * dilation;
            if (s >= 0 && s < t_len) acc += wrow[k] * xrow[s];
          }
        }
        y[static_cast<size_t>(co) * t_len + t] = acc;
      }
    }
  }

  Tensor in_t = input, w_t = weight, b_t = bias, out_t = out;
  g.record({input, weight, bias}, out, [in_t, w_t, b_t, out_t, cin, t_len, cout, k_len, half,
                                        dilation]() mutable {
    const double* gy = out_t.grad().data();
    double* gx = in_t.grad().data();
    double* gw = w_t.grad().data();
    double* gb = b_t.grad().data();
    const double* x = in_t.data();
    const double* w = w_t.data();
    for (int co = 0; co < cout; ++co) {
      const double* gyrow = gy + static_cast<size_t>(co) * t_len;
      for (int t = 0; t < t_len; ++t) gb[co] += gyrow[t];
      for (int ci = 0; ci < cin; ++ci) {
        const double* wrow = w + (static_cast<size_t>(co) * cin + ci) * k_len;
        double* gwrow = gw + (static_cast<size_t>(co) * cin + ci) * k_len;
        const double* xrow = x + static_cast<size_t>(ci) * t_len;
        double* gxrow = gx + static_cast<size_t>(ci) * t_len;
        for (int t = 0; t < t_len; ++t) {
          const double gyv = gyrow[t];
          if (gyv == 0.0) continue;
          for (int k = 0; k < k_len; ++k) {
            const int s = t + (k - half) * dilation;
            if (s >= 0 && s < t_len) {
              gwrow[k] += gyv * xrow[s];
              gxrow[s] += gyv * wrow[k];
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor maxpool1d(Graph& g, const Tensor& input) {
  require(input.rank() == 2, "maxpool1d: input must be [C x T], got " +
                                 shape_to_string(input.shape()));
  const int c_len = input.dim(0);
  const int t_len = input.dim(1);
  require(t_len % 2 == 0, "maxpool1d: temporal length must be even, got " +
                              std::to_string(t_len));
  const int t_out = t_len / 2;

  Tensor out = Tensor::zeros({c_len, t_out});
  std::vector<int> argmax(static_cast<size_t>(c_len) * t_out);
  {
    const double* x = input.data();
    double* y = out.data();
    for (int c = 0; c < c_len; ++c) {
      for (int t = 0; t < t_out; ++t) {
        const int i0 = 2 * t;
        const double a = x[static_cast<size_t>(c) * t_len + i0];
        const double b = x[static_cast<size_t>(c) * t_len + i0 + 1];
        // ties take the first index
        const int best = (b > a) ? i0 + 1 : i0;
        y[static_cast<size_t>(c) * t_out + t] = std::max(a, b);
        argmax[static_cast<size_t>(c) * t_out + t] = best;
      }
    }
  }

  Tensor in_t = input, out_t = out;
  g.record({input}, out, [in_t, out_t, argmax = std::move(argmax), c_len, t_len, t_out]() mutable {
    const double* gy = out_t.grad().data();
    double* gx = in_t.grad().data();
    for (int c = 0; c < c_len; ++c) {
      for (int t = 0; t < t_out; ++t) {
        gx[static_cast<size_t>(c) * t_len + argmax[static_cast<size_t>(c) * t_out + t]] +=
            gy[static_cast<size_t>(c) * t_out + t];
      }
    }
  });
  return out;
}

Tensor softmax_columns(Graph& g, const Tensor& input) {
  require(input.rank() == 2, "softmax_columns: input must be [C x T], got " +
                                 shape_to_string(input.shape()));
  const int c_len = input.dim(0);
  const int t_len = input.dim(1);

  Tensor out = Tensor::zeros({c_len, t_len});
  {
    const double* x = input.data();
    double* y = out.data();
    for (int t = 0; t < t_len; ++t) {
      double m = x[t];
      for (int c = 1; c < c_len; ++c) m = std::max(m, x[static_cast<size_t>(c) * t_len + t]);
      double z = 0.0;
      for (int c = 0; c < c_len; ++c) {
        const double e = std::exp(x[static_cast<size_t>(c) * t_len + t] - m);
        y[static_cast<size_t>(c) * t_len + t] = e;
        z += e;
      }
      for (int c = 0; c < c_len; ++c) y[static_cast<size_t>(c) * t_len + t] /= z;
    }
  }

  Tensor in_t = input, out_t = out;
  g.record({input}, out, [in_t, out_t, c_len, t_len]() mutable {
    const double* y = out_t.data();
    const double* gy = out_t.grad().data();
    double* gx = in_t.grad().data();
    for (int t = 0; t < t_len; ++t) {
      double dot = 0.0;
      for (int c = 0; c < c_len; ++c) {
        const size_t i = static_cast<size_t>(c) * t_len + t;
        dot += gy[i] * y[i];
      }
      for (int c = 0; c < c_len; ++c) {
        const size_t i = static_cast<size_t>(c) * t_len + t;
        gx[i] += y[i] * (gy[i] - dot);
      }
    }
  });
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor pointwise(Graph& g, const Tensor& input, Fwd fwd, Bwd bwd) {
  Tensor out = Tensor::zeros(input.shape());
  const double* x = input.data();
  double* y = out.data();
  const std::int64_t n = input.size();
  for (std::int64_t i = 0; i < n; ++i) y[i] = fwd(x[i]);

  Tensor in_t = input, out_t = out;
  g.record({input}, out, [in_t, out_t, bwd, n]() mutable {
    const double* x = in_t.data();
    const double* y = out_t.data();
    const double* gy = out_t.grad().data();
    double* gx = in_t.grad().data();
    for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * bwd(x[i], y[i]);
  });
  return out;
}

}  // namespace

Tensor exp(Graph& g, const Tensor& input) {
  return pointwise(
      g, input, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor relu(Graph& g, const Tensor& input) {
  return pointwise(
      g, input, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Graph& g, const Tensor& input) {
  return pointwise(
      g, input, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];

  Tensor a_t = a, b_t = b, out_t = out;
  g.record({a, b}, out, [a_t, b_t, out_t, n]() mutable {
    const double* gy = out_t.grad().data();
    double* ga = a_t.grad().data();
    double* gb = b_t.grad().data();
    for (std::int64_t i = 0; i < n; ++i) {
      ga[i] += gy[i];
      gb[i] += gy[i];
    }
  });
  return out;
}

Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];

  Tensor a_t = a, b_t = b, out_t = out;
  g.record({a, b}, out, [a_t, b_t, out_t, n]() mutable {
    const double* gy = out_t.grad().data();
    double* ga = a_t.grad().data();
    double* gb = b_t.grad().data();
    for (std::int64_t i = 0; i < n; ++i) {
      ga[i] += gy[i] * b_t.data()[i];
      gb[i] += gy[i] * a_t.data()[i];
    }
  });
  return out;
}

Tensor scale(Graph& g, const Tensor& input, double factor) {
  Tensor out = Tensor::zeros(input.shape());
  const std::int64_t n = input.size();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = input.data()[i] * factor;

  Tensor in_t = input, out_t = out;
  g.record({input}, out, [in_t, out_t, factor, n]() mutable {
    const double* gy = out_t.grad().data();
    double* gx = in_t.grad().data();
    for (std::int64_t i = 0; i < n; ++i) gx[i] += gy[i] * factor;
  });
  return out;
}

Tensor scale_by(Graph& g, const Tensor& input, const Tensor& factor) {
  require(factor.size() == 1, "scale_by: factor must be a scalar tensor, got " +
                                  shape_to_string(factor.shape()));
  const double f = factor.value();
  Tensor out = Tensor::zeros(input.shape());
  const std::int64_t n = input.size();
  for (std::int64_t i = 0; i < n; ++i) out.data()[i] = input.data()[i] * f;

  Tensor in_t = input, f_t = factor, out_t = out;
  g.record({input, factor}, out, [in_t, f_t, out_t, n]() mutable {
    const double* gy = out_t.grad().data();
    double* gx = in_t.grad().data();
    double& gf = f_t.grad()[0];
    const double f = f_t.value();
    for (std::int64_t i = 0; i < n; ++i) {
      gx[i] += gy[i] * f;
      gf += gy[i] * in_t.data()[i];
    }
  });
  return out;
}

Tensor sum(Graph& g, const Tensor& input) {
  double acc = 0.0;
  const std::int64_t n = input.size();
  for (std::int64_t i = 0; i < n; ++i) acc += input.data()[i];
  Tensor out = Tensor::scalar(acc);

  Tensor in_t = input, out_t = out;
  g.record({input}, out, [in_t, out_t, n]() mutable {
    const double gy = out_t.grad()[0];
    double* gx = in_t.grad().data();
    for (std::int64_t i = 0; i < n; ++i) gx[i] += gy;
  });
  return out;
}

}  // namespace afotad
