// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nid/data.hpp"
#include "nid/metrics.hpp"
#include "nid/rng.hpp"

using namespace nid;

namespace {

Tensor random_points(int n, int d, Rng& rng) {
  Tensor t = Tensor::zeros({n, d});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = uniform(rng, -1.0, 1.0);
  return t;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("psnr closed forms") {
  Tensor a = Tensor::full({10, 3}, 0.4);
  CHECK(std::isinf(psnr(a, a)));

  Tensor b = a;
  for (std::int64_t i = 0; i < b.size(); ++i) b[i] += 0.1;
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(b, a) == psnr(a, b));  // symmetric

  Tensor zeros = Tensor::zeros({5, 1});
  Tensor ones = Tensor::full({5, 1}, 1.0);
  CHECK(psnr(zeros, ones) == doctest::Approx(0.0));

  CHECK(psnr(a, b, 2.0) == doctest::Approx(20.0 + 20.0 * std::log10(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(a, zeros), ShapeError);
}

TEST_CASE("ssim is exactly one on identical images and penalizes inversion") {
  Image img = gen_blob_images(1, 12, 81)[0];
  CHECK(ssim(img, img) == 1.0);

  Image neg = img;
  for (auto& v : neg.pix) v = 1.0 - v;
  CHECK(ssim(img, neg) < 1.0);

  Image tiny(4, 4, 1);
  CHECK_THROWS_AS(ssim(tiny, tiny), ShapeError);
  Image other(12, 12, 1);
  CHECK_THROWS_AS(ssim(img, other), ShapeError);
}

TEST_CASE("ssim single-window case matches a direct formula evaluation") {
  Image a(8, 8, 1), b(8, 8, 1);
  Rng rng = make_rng(82);
  for (auto& v : a.pix) v = uniform(rng, 0.0, 1.0);
  for (auto& v : b.pix) v = uniform(rng, 0.0, 1.0);

  double ma = 0, mb = 0;
  for (int i = 0; i < 64; ++i) {
    ma += a.pix[static_cast<std::size_t>(i)];
    mb += b.pix[static_cast<std::size_t>(i)];
  }
  ma /= 64.0;
  mb /= 64.0;
  double va = 0, vb = 0, cov = 0;
  for (int i = 0; i < 64; ++i) {
    double da = a.pix[static_cast<std::size_t>(i)] - ma;
    double db = b.pix[static_cast<std::size_t>(i)] - mb;
    va += da * da;
    vb += db * db;
    cov += da * db;
  }
  va /= 64.0;
  vb /= 64.0;
  cov /= 64.0;
  double c1 = 1e-4, c2 = 9e-4;
  double want =
      ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("chamfer closed forms and brute-force agreement") {
  Tensor p = Tensor::matrix(1, 1, {0.0});
  Tensor q = Tensor::matrix(1, 1, {1.0});
  CHECK(chamfer(p, q) == doctest::Approx(1.0));

  Rng rng = make_rng(83);
  Tensor P = random_points(60, 2, rng);
  Tensor Q = random_points(90, 2, rng);
  CHECK(chamfer(P, P) == 0.0);
  CHECK(chamfer(P, Q) == chamfer(Q, P));

  // Independent O(|P||Q|) scan.
  auto side = [](const Tensor& A, const Tensor& B) {
    double total = 0.0;
    for (int i = 0; i < A.rows(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < B.rows(); ++j)
        best = std::min(best, std::hypot(A.at(i, 0) - B.at(j, 0), A.at(i, 1) - B.at(j, 1)));
      total += best;
    }
    return total / A.rows();
  };
  CHECK(chamfer(P, Q) == doctest::Approx(0.5 * (side(P, Q) + side(Q, P))).epsilon(1e-12));

  CHECK_THROWS_AS(chamfer(Tensor::zeros({0, 2}), Q), std::invalid_argument);
}

TEST_CASE("normal consistency is orientation blind") {
  Tensor id = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK(normal_consistency(id, id) == doctest::Approx(1.0));

  Tensor rot = Tensor::matrix(2, 2, {0, 1, -1, 0});
  CHECK(normal_consistency(id, rot) == doctest::Approx(0.0));

  Tensor flip = Tensor::matrix(2, 2, {1, 0, 0, -1});  // parallel + antiparallel
  CHECK(normal_consistency(id, flip) == doctest::Approx(1.0));

  Tensor zero = Tensor::matrix(2, 2, {1, 0, 0, 0});
  CHECK_THROWS_AS(normal_consistency(id, zero), NumericError);
  CHECK_THROWS_AS(normal_consistency(id, Tensor::matrix(1, 2, {1, 0})), ShapeError);
}

TEST_CASE("nearest indices match by Euclidean distance") {
  Tensor P = Tensor::matrix(3, 2, {0, 0, 0.9, 0.9, -1, 0});
  Tensor Q = Tensor::matrix(2, 2, {0.1, 0.0, 1.0, 1.0});
  auto idx = nearest_indices(P, Q);
  REQUIRE(idx.size() == 3);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
  CHECK(idx[2] == 0);
}

TEST_CASE("zero-level extraction recovers a circle with radial normals") {
  FieldFn disk_sdf = [](const Tensor& pts) {
    Tensor out = Tensor::zeros({pts.rows(), 1});
    for (int i = 0; i < pts.rows(); ++i)
      out.at(i, 0) = std::hypot(pts.at(i, 0), pts.at(i, 1)) - 0.5;
    return out;
  };
  LevelSet ls = extract_zero_level(disk_sdf, 64);
  REQUIRE(ls.points.rows() > 50);
  for (int i = 0; i < ls.points.rows(); ++i) {
    double x = ls.points.at(i, 0), y = ls.points.at(i, 1);
    double r = std::hypot(x, y);
    CHECK(std::fabs(r - 0.5) < 5e-3);
    double dot = (x / r) * ls.normals.at(i, 0) + (y / r) * ls.normals.at(i, 1);
    CHECK(dot > 0.999);  // outward radial
    CHECK(std::hypot(ls.normals.at(i, 0), ls.normals.at(i, 1)) == doctest::Approx(1.0));
  }

  // Extracted boundary is Chamfer-close to an analytic circle sampling.
  Tensor circle = Tensor::zeros({360, 2});
  for (int d = 0; d < 360; ++d) {
    circle.at(d, 0) = 0.5 * std::cos(d * M_PI / 180.0);
    circle.at(d, 1) = 0.5 * std::sin(d * M_PI / 180.0);
  }
  CHECK(chamfer(ls.points, circle) < 0.01);

  // Everywhere-positive field has no crossings.
  LevelSet none = extract_zero_level(
      [](const Tensor& pts) { return Tensor::full({pts.rows(), 1}, 1.0); }, 16);
  CHECK(none.points.rows() == 0);
}

TEST_CASE("metric reports aggregate and serialize in instance order") {
  MetricReport rep;
  rep.columns = {"psnr", "ssim"};
  rep.add_row(2, {30.0, 0.9});
  rep.add_row(0, {std::numeric_limits<double>::infinity(), 1.0});
  rep.add_row(1, {20.0, 0.8});

  auto agg = rep.aggregate();
  CHECK(std::isinf(agg[0]));
  CHECK(agg[1] == doctest::Approx(0.9).epsilon(1e-12));

  std::string path = "/tmp/nid_test_report.csv";
  rep.write_csv(path);
  std::ifstream f(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(f, line)) lines.push_back(line);
  std::remove(path.c_str());
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "instance,psnr,ssim");
  CHECK(lines[1].rfind("0,99,", 0) == 0);  // capped sentinel, sorted first
  CHECK(lines[2].rfind("1,20,", 0) == 0);
  CHECK(lines[3].rfind("2,30,", 0) == 0);
  // Mean row equals the mean of the capped rows.
  std::istringstream ss(lines[4]);
  std::string tag, p, s;
  std::getline(ss, tag, ',');
  std::getline(ss, p, ',');
  std::getline(ss, s, ',');
  CHECK(tag == "mean");
  CHECK(std::stod(p) == doctest::Approx((99.0 + 20.0 + 30.0) / 3.0).epsilon(1e-9));
  CHECK(std::stod(s) == doctest::Approx(0.9).epsilon(1e-9));

  CHECK_THROWS_AS(rep.add_row(3, {1.0}), ShapeError);
}

TEST_CASE("throughput bench reports exact parameter counts") {
  NetworkDims dims;
  dims.trunk = {2, 4, 8, 1, 30.0};
  dims.head = {8, 3, 1};
  dims.n_experts = 2;
  ParamStore ps = init_network(dims, 91);
  // embed 2*4+4, h0 4*8+8, per head (8*3+3)+(3*1+1) = 31.
  CHECK(ps.num_scalars() == 12 + 40 + 62);

  SparseCode code;
  code.k = 2;
  code.entries = {{0, 0.6}, {1, 0.8}};
  BenchResult two = bench_throughput(ps, dims, code, 8, 3);
  CHECK(two.param_count == 114);
  CHECK(two.head_evals_per_image == 2);
  CHECK(two.images_per_sec > 0.0);

  SparseCode one;
  one.k = 1;
  one.entries = {{1, 1.0}};
  BenchResult single = bench_throughput(ps, dims, one, 8, 1);
  CHECK(single.head_evals_per_image <= two.head_evals_per_image);

  CHECK_THROWS_AS(bench_throughput(ps, dims, code, 8, 0), std::invalid_argument);
}

}  // TEST_SUITE
