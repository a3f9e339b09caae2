// Grows a stump and a subagged stump on one sample and compares their
// predictions along [0,1].
#include <cstdio>
#include <vector>

#include "subag/subag.hpp"

int main() {
  using namespace subag;
  const Dgp dgp(RegressionFn::square, 0.2);
  const Dataset data = sample_dataset(dgp, 100, derive_stream(2024, 0));
  const auto stump = StoppingRule::exact_splits(1);
  const Tree tree = grow(data, stump);
  const Ensemble ens = fit_ensemble(data, ResamplePlan::half_sample(data.size()), stump, derive_stream(2024, 1));

  std::printf("stump split at %.4f\n", tree.nodes()[0].split.threshold);
  std::printf("%6s %8s %8s %8s\n", "x0", "f", "tree", "subag");
  for (int j = 0; j <= 10; ++j) {
    const std::vector<double> x0{j / 10.0};
    std::printf("%6.2f %8.4f %8.4f %8.4f\n", x0[0], dgp.f(x0), tree.predict(x0), ens.predict(x0));
  }
}
