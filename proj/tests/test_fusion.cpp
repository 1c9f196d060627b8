// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"
#include "diff3d/fusion/fusion.hpp"
#include "diff3d/numerics/grad_check.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace diff3d;
using namespace diff3d::fusion;

namespace {

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n, 1}, std::move(v));
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "diff3d_test_fusion";
  std::filesystem::create_directories(dir);
  return dir / name;
}

PatientDecomposition with_heat(std::string id, double score, std::vector<double> heat) {
  PatientDecomposition d;
  d.patient_id = std::move(id);
  d.score = score;
  d.heat = std::move(heat);
  return d;
}

}  // namespace

TEST_CASE("A starts at ones") {
  ParameterSet reg;
  GlobalClusterAttention a(reg, 5);
  CHECK(a.k() == 5);
  for (double v : a.weights().value.values()) CHECK(v == 1.0);
  CHECK(reg.find("fusion.A") != nullptr);
  CHECK_THROWS_AS(GlobalClusterAttention(reg, 0, "x"), InvalidArgument);
}

TEST_CASE("fuse examples") {
  SUBCASE("single cluster") {
    auto d = decompose(column({2, 2, 2}), std::vector<std::size_t>{0, 0, 0},
                       {true, true, true}, Tensor({2}, std::vector<double>{3, 5}));
    CHECK(d.score == 6.0);
    CHECK(d.ratio == std::vector<double>{1.0, 0.0});
    CHECK(d.contribution[1] == 0.0);
  }
  SUBCASE("A = 0") {
    Rng rng(1);
    auto d = decompose(testing::random_tensor({6, 1}, rng), std::vector<std::size_t>{0, 1, 2, 0, 1, 2},
                       std::vector<bool>(6, true), Tensor({3}));
    CHECK(d.score == 0.0);
  }
  SUBCASE("hand evaluation with K = 3") {
    // r̄ = [1, −1, 0.5], q = [0.5, 0.25, 0.25] from 4 slices.
    auto d = decompose(column({0.5, 1.5, -1.0, 0.5, 7.0}), std::vector<std::size_t>{0, 0, 1, 2, 3},
                       {true, true, true, true, false}, Tensor({3}, std::vector<double>{1, 2, 4}));
    CHECK(d.mean_risk == std::vector<double>{1.0, -1.0, 0.5});
    CHECK(d.ratio == std::vector<double>{0.5, 0.25, 0.25});
    CHECK(d.heat == std::vector<double>{1.0, -2.0, 2.0});
    CHECK(d.score == doctest::Approx(0.5).epsilon(1e-15));
  }
}

TEST_CASE("fuse errors") {
  Tensor a({2}, 1.0);
  CHECK_THROWS_AS(decompose(column({1, 2}), std::vector<std::size_t>{2, 2}, {false, false}, a),
                  InvalidArgument);
  CHECK_THROWS_AS(decompose(column({1, 2}), std::vector<std::size_t>{0, 2}, {true, true}, a),
                  InvalidArgument);
  CHECK_THROWS_AS(decompose(column({1, 2}), std::vector<std::size_t>{0}, {true, true}, a), ShapeError);
}

TEST_CASE("decomposition is exact, order-free and scale covariant") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t k = 2 + seed % 7, n = 3 + seed % 11;
    Tensor r = testing::random_tensor({n, 1}, rng, 3.0);
    Tensor a = testing::random_tensor({k}, rng);
    std::vector<std::size_t> c(n);
    std::vector<bool> mask(n, true);
    for (std::size_t i = 0; i < n; ++i) c[i] = rng() % k;
    mask[n - 1] = false;
    c[n - 1] = k;
    auto d = decompose(r, c, mask, a);

    double total = 0.0;
    for (double v : d.contribution) total += v;
    CHECK(std::abs(total - d.score) <= 1e-9);
    for (std::size_t j = 0; j < k; ++j) {
      CHECK(d.contribution[j] == d.heat[j] * d.ratio[j]);
      if (d.ratio[j] == 0.0) {
        CHECK(d.contribution[j] == 0.0);
        CHECK(d.mean_risk[j] == 0.0);
      }
    }

    std::vector<std::size_t> perm(n - 1);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor rp({n, 1});
    std::vector<std::size_t> cp = c;
    for (std::size_t i = 0; i + 1 < n; ++i) {
      rp[i] = r[perm[i]];
      cp[i] = c[perm[i]];
    }
    auto dp = decompose(rp, cp, mask, a);
    CHECK(std::abs(dp.score - d.score) < 1e-12);
    for (std::size_t j = 0; j < k; ++j) CHECK(std::abs(dp.mean_risk[j] - d.mean_risk[j]) < 1e-12);

    const double lambda = -2.5;
    Tensor rs = r;
    for (auto& v : rs.values()) v *= lambda;
    auto ds = decompose(rs, c, mask, a);
    CHECK(std::abs(ds.score - lambda * d.score) < 1e-12);
    for (std::size_t j = 0; j < k; ++j) {
      CHECK(std::abs(ds.mean_risk[j] - lambda * d.mean_risk[j]) < 1e-12);
      CHECK(std::abs(ds.heat[j] - lambda * d.heat[j]) < 1e-12);
    }
  }
}

TEST_CASE("predict closed forms") {
  CHECK(predict(0.0) == 0.5);
  CHECK(predict(std::log(3.0)) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(predict(800.0) == 1.0);
  CHECK(predict(-800.0) >= 0.0);
  CHECK(predict(-800.0) < 1e-300);
  CHECK(predicted_class(0.0) == 1);
  CHECK(predicted_class(-0.1) == 0);
}

TEST_CASE("loss gradient w.r.t. A and slice scores passes grad_check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Parameter a{"A", testing::random_tensor({4}, rng), {}};
    Parameter r{"r", testing::random_tensor({7, 1}, rng), {}};
    std::vector<std::size_t> c{0, 1, 1, 3, 0, 3, 4};
    std::vector<bool> mask{true, true, true, true, true, true, false};
    for (int label : {0, 1}) {
      auto res = grad_check(
          [&](Tape& t) {
            return fusion_loss(fuse(t.param(r), c, mask, t.param(a)).score, label, 1.7);
          },
          {&a, &r});
      CHECK(res.max_rel_error < 1e-4);
    }
  }
  Tape tape;
  CHECK_THROWS_AS(fusion_loss(tape.constant(Tensor::scalar(0)), 2), InvalidArgument);
}

TEST_CASE("rank_clusters examples") {
  std::vector<PatientDecomposition> same{with_heat("a", 0, {1, 2, 3}), with_heat("b", 0, {1, 2, 3})};
  auto flat = rank_clusters(same, std::vector<int>{1, 0});
  CHECK(flat.score == std::vector<double>{0, 0, 0});
  CHECK(flat.order == std::vector<std::size_t>{0, 1, 2});

  std::vector<PatientDecomposition> dom{with_heat("a", 0, {0, 0, 9}), with_heat("b", 0, {0, 0, 0})};
  CHECK(rank_clusters(dom, std::vector<int>{1, 0}).order.front() == 2);

  // Class 1: p0, p2. Class 0: p1, p3.
  std::vector<PatientDecomposition> four{
      with_heat("p0", 0, {1.0, 4.0, -1.0, 0.0}), with_heat("p1", 0, {3.0, 0.0, 1.0, 0.0}),
      with_heat("p2", 0, {2.0, 2.0, -3.0, 1.0}), with_heat("p3", 0, {1.0, 2.0, 1.0, 0.0})};
  auto r = rank_clusters(four, std::vector<int>{1, 0, 1, 0});
  // Means class 1: [1.5, 3, −2, 0.5]; class 0: [2, 1, 1, 0].
  CHECK(r.score == std::vector<double>{-0.5, 2.0, -3.0, 0.5});
  CHECK(r.order == std::vector<std::size_t>{1, 3, 0, 2});
  CHECK(r.rank_of == std::vector<std::size_t>{3, 1, 4, 2});

  CHECK_THROWS_AS(rank_clusters(four, std::vector<int>{1, 1, 1, 1}), InvalidArgument);
}

TEST_CASE("representative slices agree with a linear scan") {
  Rng rng(3);
  prototypes::PrototypeBook book;
  book.centroids = prototypes::normalize_rows(testing::random_tensor({3, 5}, rng));
  Tensor corpus = testing::random_tensor({40, 5}, rng);
  for (std::size_t j = 0; j < 5; ++j) corpus.at(7, j) = 4.0 * book.centroids.at(1, j);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < 40; ++i) ids.push_back("p:" + std::to_string(i));

  auto top = representative_slices(book, corpus, ids, 1, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].slice_id == "p:7");
  CHECK(top[0].similarity == doctest::Approx(1.0));

  auto labels = prototypes::assign_all(book, corpus);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::pair<double, std::size_t>> scan;
    for (std::size_t i = 0; i < 40; ++i) {
      if (labels[i] != c) continue;
      double dot = 0, xx = 0, mm = 0;
      for (std::size_t j = 0; j < 5; ++j) {
        dot += corpus.at(i, j) * book.centroids.at(c, j);
        xx += corpus.at(i, j) * corpus.at(i, j);
        mm += book.centroids.at(c, j) * book.centroids.at(c, j);
      }
      scan.push_back({-dot / std::sqrt(xx * mm), i});
    }
    std::sort(scan.begin(), scan.end());
    auto all = representative_slices(book, corpus, ids, c, 1000);
    REQUIRE(all.size() == scan.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
      CHECK(all[i].slice_id == ids[scan[i].second]);
      CHECK(all[i].similarity == doctest::Approx(-scan[i].first).epsilon(1e-12));
      CHECK(all[i].cluster_id == c);
    }
  }

  prototypes::PrototypeBook lonely = book;
  lonely.centroids = Tensor::matrix(2, 5, {1, 0, 0, 0, 0, -1, 0, 0, 0, 0});
  Tensor pos = Tensor::matrix(2, 5, {1, 1, 0, 0, 0, 2, 0, 1, 0, 0});
  CHECK_THROWS_AS(representative_slices(lonely, pos, std::vector<std::string>{"a", "b"}, 1, 3),
                  InvalidArgument);
}

TEST_CASE("heatmap export layout and round trip") {
  std::vector<PatientDecomposition> one{with_heat("solo", 0.3, {0.25, -1.5})};
  auto t1 = parse_heatmap_csv(heatmap_csv(one));
  CHECK(t1.patients.size() == 1);
  CHECK(t1.heat.size() == 2);

  std::vector<PatientDecomposition> two{with_heat("patient-B", 0.1, {1, 2}),
                                        with_heat("patient-A", 0.9, {3, 4})};
  auto t2 = parse_heatmap_csv(heatmap_csv(two));
  CHECK(t2.patients == std::vector<std::string>{"patient-A", "patient-B"});
  CHECK(t2.clusters == std::vector<std::size_t>{0, 1});
  CHECK(t2.heat[1] == std::vector<double>{4, 2});

  Rng rng(4);
  std::vector<PatientDecomposition> cohort;
  for (int p = 0; p < 12; ++p) {
    Tensor h = testing::random_tensor({6}, rng);
    cohort.push_back(with_heat("id" + std::to_string(p), h[0],
                               {h.values().begin(), h.values().end()}));
  }
  cohort[3].score = cohort[5].score;  // tie keeps input order
  const auto path = scratch("heat.csv");
  export_heatmap(cohort, path);
  auto t = parse_heatmap_csv(io::read_file(path));
  REQUIRE(t.patients.size() == 12);
  for (std::size_t col = 0; col + 1 < 12; ++col) {
    auto find = [&](const std::string& id) {
      return std::find_if(cohort.begin(), cohort.end(),
                          [&](const auto& d) { return d.patient_id == id; }) - cohort.begin();
    };
    const auto a = find(t.patients[col]), b = find(t.patients[col + 1]);
    CHECK(cohort[a].score >= cohort[b].score);
    if (cohort[a].score == cohort[b].score) CHECK(a < b);
  }
  for (std::size_t col = 0; col < 12; ++col) {
    const auto& d = *std::find_if(cohort.begin(), cohort.end(),
                                  [&](const auto& x) { return x.patient_id == t.patients[col]; });
    for (std::size_t row = 0; row < 6; ++row) CHECK(std::abs(t.heat[row][col] - d.heat[row]) <= 1e-6);
  }

  CHECK_THROWS_AS(heatmap_csv(std::vector<PatientDecomposition>{}), InvalidArgument);
  CHECK_THROWS_AS(heatmap_csv(std::vector{with_heat("a,b", 0, {1})}), InvalidArgument);
  CHECK_THROWS_AS(export_heatmap(one, "/proc/diff3d/forbidden.csv"), DataError);
  CHECK_THROWS_AS(parse_heatmap_csv("cluster,a\n0,zz\n"), DataError);
}

TEST_CASE("ranking and representatives exports") {
  ClusterRanking r;
  r.score = {0.5, -1.0, 2.0};
  r.order = {2, 0, 1};
  CHECK(ranking_csv(r) == "cluster_id,score,rank\n2,2,1\n0,0.5,2\n1,-1,3\n");

  std::vector<Representative> reps{{3, "p7:12", 0.875}, {3, "p2:0", 0.5}};
  const auto path = scratch("reps.json");
  export_representatives(reps, path);
  auto j = nlohmann::json::parse(io::read_file(path));
  REQUIRE(j.size() == 2);
  CHECK(j[0]["cluster_id"] == 3);
  CHECK(j[0]["slice_id"] == "p7:12");
  CHECK(j[1]["similarity"] == 0.5);
}
