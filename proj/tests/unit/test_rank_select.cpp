#include <doctest.h>

#include <algorithm>
#include <random>

#include "planted.hpp"
#include "privsurf/rank_select.hpp"

using namespace privsurf;
using namespace privsurf::testing;

namespace {

PlantedParafac2Spec ten_slices(Eigen::Index rank, std::uint64_t seed) {
  return {.rows = {40, 44, 48, 52, 56, 60, 64, 68, 72, 76}, .users = 48, .rank = rank, .seed = seed};
}

Parafac2Model exact_model(const PlantedParafac2& p) {
  Parafac2Model m;
  m.Q = p.Q;
  m.H = p.H;
  m.S = p.S;
  m.V = p.V;
  return m;
}

}  // namespace

TEST_SUITE("rank_select") {
  TEST_CASE("compressed tensor of one slice") {
    std::mt19937_64 rng(1);
    const MultiSet ms = make_multiset({random_normal(9, 5, rng)});
    const Parafac2Model m = parafac2_als(ms, 2);
    const DenseTensor3 t = compressed_tensor(m, ms);
    REQUIRE(t.dims() == Dims3{2, 5, 1});
    CHECK((t.slice(0) - m.Q[0].transpose() * ms.slices[0].data).norm() <= 1e-12);
  }

  TEST_CASE("compressed slices of an exact model equal H diag(S_k) V^T") {
    const PlantedParafac2 p = planted_parafac2(ten_slices(3, 2));
    const DenseTensor3 t = compressed_tensor(exact_model(p), p.data);
    for (Eigen::Index k = 0; k < 10; ++k) {
      const Matrix expected = p.H * p.S.row(k).asDiagonal() * p.V.transpose();
      CHECK((t.slice(k) - expected).norm() <= 1e-8 * expected.norm());
    }
  }

  TEST_CASE("compressed tensor uses imputed values at masked entries") {
    PlantedParafac2 p = planted_parafac2({.rows = {7, 8, 6}, .users = 5, .rank = 2, .seed = 3});
    add_noise_db(p.data, 10.0, 1);
    mask_at_random(p.data, 0.2, 2);
    const Parafac2Model m = parafac2_als(p.data, 2, {.max_iters = 20});
    const DenseTensor3 t = compressed_tensor(m, p.data);
    for (Eigen::Index k = 0; k < 3; ++k) {
      const auto& s = p.data.slices[std::size_t(k)];
      const Matrix rec = parafac2_reconstruct(m, k);
      const Matrix& q = m.Q[std::size_t(k)];
      for (Eigen::Index r = 0; r < 2; ++r)
        for (Eigen::Index j = 0; j < 5; ++j) {
          double acc = 0.0;
          for (Eigen::Index i = 0; i < s.rows(); ++i) acc += q(i, r) * (s.mask(i, j) ? s.data(i, j) : rec(i, j));
          CHECK(t(r, j, k) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
    MultiSet wrong = p.data;
    wrong.slices.pop_back();
    wrong.info.pop_back();
    CHECK_THROWS_AS(compressed_tensor(m, wrong), Error);
  }

  TEST_CASE("noiseless planted rank 4 is chosen from [2, 8]") {
    const PlantedParafac2 p = planted_parafac2(ten_slices(4, 5));
    const RankSweepResult res = auto_rank(p.data, 2, 8);
    CHECK(res.chosen_rank == 4);
    REQUIRE(res.candidates.size() == 7);
    for (std::size_t i = 0; i < res.candidates.size(); ++i) CHECK(res.candidates[i].rank == Eigen::Index(i) + 2);
    CHECK(std::any_of(res.candidates.begin(), res.candidates.end(),
                      [&](const RankCandidate& c) { return c.rank == res.chosen_rank; }));
    CHECK_FALSE(res.trace.empty());
  }

  TEST_CASE("rank-1 data chooses 1") {
    const PlantedParafac2 p = planted_parafac2({.rows = {20, 25, 30, 22}, .users = 12, .rank = 1, .seed = 6});
    CHECK(auto_rank(p.data, 1, 3).chosen_rank == 1);
  }

  TEST_CASE("largest qualifying rank wins, otherwise the best score") {
    PlantedParafac2 p = planted_parafac2(ten_slices(3, 8));
    const RankSweepResult res = auto_rank(p.data, 2, 5);
    Eigen::Index expected = 0;
    for (const auto& c : res.candidates) {
      CHECK(c.qualifies == (c.core_consistency >= res.threshold && !c.rank_deficient));
      if (c.qualifies) expected = c.rank;
    }
    if (expected > 0) CHECK(res.chosen_rank == expected);

    // an impossible threshold falls back to the argmax
    const RankSweepResult none = auto_rank(p.data, 2, 5, {.threshold = 1e9});
    auto best = std::max_element(none.candidates.begin(), none.candidates.end(),
                                 [](const RankCandidate& a, const RankCandidate& b) {
                                   return a.core_consistency <= b.core_consistency;
                                 });
    CHECK(none.chosen_rank == best->rank);
  }

  TEST_CASE("consistency drops just above the planted rank") {
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const PlantedParafac2 p = planted_parafac2(ten_slices(4, 40 + seed));
      const RankSweepResult res = auto_rank(p.data, 2, 5);
      const double above = res.candidates.back().core_consistency;
      bool all = true;
      for (std::size_t i = 0; i + 1 < res.candidates.size(); ++i) all = all && res.candidates[i].core_consistency > above;
      ok += all ? 1 : 0;
    }
    CHECK(ok >= 9);
  }

  TEST_CASE("slice order does not matter and reruns are identical") {
    PlantedParafac2 p = planted_parafac2(ten_slices(3, 9));
    add_noise_db(p.data, 25.0, 1);
    const RankSweepResult a = auto_rank(p.data, 2, 5);
    const RankSweepResult b = auto_rank(p.data, 2, 5, {.jobs = 3});
    CHECK(a.chosen_rank == b.chosen_rank);
    for (std::size_t i = 0; i < a.candidates.size(); ++i) {
      CHECK(a.candidates[i].core_consistency == b.candidates[i].core_consistency);
      CHECK(a.candidates[i].parafac2_fit == b.candidates[i].parafac2_fit);
    }
    MultiSet reversed = p.data;
    std::reverse(reversed.slices.begin(), reversed.slices.end());
    std::reverse(reversed.info.begin(), reversed.info.end());
    CHECK(auto_rank(reversed, 2, 5).chosen_rank == a.chosen_rank);
  }

  TEST_CASE("range errors") {
    const PlantedParafac2 p = planted_parafac2({.rows = {6, 7, 8}, .users = 5, .rank = 2, .seed = 1});
    CHECK_THROWS_AS(auto_rank(p.data, 3, 2), Error);
    CHECK_THROWS_AS(auto_rank(p.data, 0, 2), Error);
    CHECK_THROWS_AS(auto_rank(p.data, 1, 4), Error);  // above K = 3
  }
}
