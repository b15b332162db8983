// Finds every Dirichlet path of one random field and prints its discrete
// profile, the lemma slacks and whether it passes below the triangle.
//
//   blocked_paths [seed] [F] [N]

#include <cstdint>
#include <cstdio>
#include <cstdlib>

#include "romlab/blocked_path.hpp"
#include "romlab/discretization.hpp"

int main(int argc, char **argv) {
  using namespace romlab;
  FieldConfig c;
  c.seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 7;
  c.F = argc > 2 ? std::atof(argv[2]) : 3.0;
  const int N = argc > 3 ? std::atoi(argv[3]) : 6;
  const ObstacleGrid grid(c);

  const auto search = find_dirichlet_paths(grid, N);
  std::printf("seed %llu  F %g  N %d: %zu path(s) after %llu shots\n",
              static_cast<unsigned long long>(c.seed), c.F, N, search.paths.size(),
              static_cast<unsigned long long>(search.shots));

  for (const auto &p : search.paths) {
    const auto d = discretize(p);
    const auto rep = verify_lemma_bounds(p, d, grid);
    const auto cr = crossing_check(d, 1.0);
    std::printf("\nslope %.6f  min %.4f  F_hat %.6f\n", p.slope0, p.min_value(), p.F_hat);
    std::printf("  i    v_hat      v_bar\n");
    for (int i = -N; i <= N; ++i)
      std::printf("%3d %9.5f %9.5f\n", i, d.hat(i), d.bar(i));
    std::printf("averaging bound: %s (min slack %.3g)\n", rep.pass_a() ? "ok" : "violated",
                rep.min_slack_a);
    std::printf("slope gain bound: %s\n", rep.pass_b() ? "ok" : "violated");
    std::printf("window bound: %d lower, %d upper violations\n", rep.violations_c_lo,
                rep.violations_c_hi);
    std::printf("below triangle K=1: %s\n", cr.below_triangle ? "yes" : "no");
  }
  return 0;
}
