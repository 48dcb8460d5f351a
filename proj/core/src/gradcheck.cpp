#include "afotad/gradcheck.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "afotad/ops.hpp"

namespace afotad {

namespace {

double projected_value(const CheckedFn& f, const std::vector<Tensor>& inputs,
                       const std::vector<double>& proj) {
  Graph g;
  Tensor y = f(g, inputs);
  double acc = 0.0;
  for (std::int64_t i = 0; i < y.size(); ++i) acc += proj[static_cast<size_t>(i)] * y.data()[i];
  return acc;
}

}  // namespace

GradCheckResult grad_check(const CheckedFn& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  if (options.eps < 1e-7 || options.eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
  }

  // Analytic pass. The scalar head is a fixed random projection so that sign
  // errors cannot cancel across output components.
  Graph g;
  for (auto& t : inputs) t.set_requires_grad(true).zero_grad();
  Tensor y = f(g, inputs);

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.25, 1.0);
  std::vector<double> proj(static_cast<size_t>(y.size()));
  for (auto& w : proj) w = unit(rng) * (rng() & 1 ? 1.0 : -1.0);

  Tensor proj_t = Tensor::from_data(y.shape(), proj);
  Tensor loss = sum(g, mul(g, y, proj_t));
  g.backward(loss);

  if (options.corrupt_analytic) options.corrupt_analytic(inputs);

  GradCheckResult result;
  const double eps = options.eps;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor& in = inputs[i];
    for (std::int64_t c = 0; c < in.size(); ++c) {
      const double saved = in.data()[c];
      in.data()[c] = saved + eps;
      const double up = projected_value(f, inputs, proj);
      in.data()[c] = saved - eps;
      const double down = projected_value(f, inputs, proj);
      in.data()[c] = saved;

      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = in.grad()[static_cast<size_t>(c)];
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = static_cast<int>(i);
        result.worst_coord = c;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace afotad
