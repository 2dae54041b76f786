#include "aal/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace aal {

namespace {

double evaluate(const std::function<Tensor<double>()>& loss) {
  NoGradScope<double> no_grad;
  const double v = loss().item();
  if (!std::isfinite(v)) throw NumericError("gradcheck: non-finite loss");
  return v;
}

}  // namespace

GradcheckReport gradcheck(const std::string& name, const std::function<Tensor<double>()>& loss,
                          NamedTensors<double> params, const GradcheckOptions& options) {
  GradcheckReport report;
  report.name = name;

  for (auto& [pname, p] : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> value = loss();
    if (!std::isfinite(value.item())) throw NumericError("gradcheck: non-finite loss");
    tape.backward(value);
  }

  const double h = options.step;
  for (auto& [pname, p] : params) {
    std::vector<double> analytic = p.has_grad() ? std::vector<double>(p.grad().begin(), p.grad().end())
                                                : std::vector<double>(p.numel(), 0.0);
    const std::size_t n = p.numel();
    const std::size_t stride =
        options.max_entries_per_param == 0 ? 1 : std::max<std::size_t>(1, n / options.max_entries_per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = evaluate(loss);
      p[i] = orig - h;
      const double down = evaluate(loss);
      p[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[i] - numeric) /
                         std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      ++report.entries_checked;
      if (report.worst_param.empty() || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pname;
        report.worst_index = i;
        report.worst_analytic = analytic[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < options.threshold;
  return report;
}

}  // namespace aal
