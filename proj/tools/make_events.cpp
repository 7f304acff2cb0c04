// Writes a synthetic cohort (events, scores, deadlines, config, truth) for
// trying the pipeline end to end without the original study data.
#include <iostream>

#include <CLI11.hpp>

#include "synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic phone-sensing cohort generator"};
  privsurf::synth::CohortSpec spec;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--users", spec.users)->check(CLI::PositiveNumber);
  app.add_option("--days", spec.days)->check(CLI::PositiveNumber);
  app.add_option("--clusters", spec.clusters)->check(CLI::Range(1, 4));
  app.add_option("--seed", spec.seed);
  app.add_option("--off-min", spec.off_min)->check(CLI::Range(0.0, 0.9));
  app.add_option("--off-max", spec.off_max)->check(CLI::Range(0.0, 0.9));
  CLI11_PARSE(app, argc, argv);
  if (spec.off_max < spec.off_min) {
    std::cerr << "--off-max must be >= --off-min\n";
    return 2;
  }
  try {
    const auto truth = privsurf::synth::write_cohort(spec, out);
    std::cout << out << " (" << truth.user_ids.size() << " users)\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
