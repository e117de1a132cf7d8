#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <filesystem>
#include <random>

#include "support/temp_dir.hpp"
#include "vfe/datakit/batches.hpp"
#include "vfe/errors.hpp"
#include "vfe/eval/embeddings.hpp"
#include "vfe/eval/fid.hpp"
#include "vfe/eval/frechet.hpp"
#include "vfe/eval/metrics.hpp"
#include "vfe/eval/probe.hpp"

using namespace vfe;
using namespace vfe::eval;
using datakit::ImageTensor;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

GaussianStats make_stats(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  GaussianStats s;
  s.mean = std::move(mean);
  s.covariance = std::move(cov);
  s.count = 2;
  return s;
}

ImageTensor constant_image(float value, int size = 4) {
  return ImageTensor(3, size, size, value);
}

ImageTensor noise_image(std::mt19937_64& rng, int size = 8) {
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  ImageTensor im(3, size, size);
  for (auto& v : im.data) v = u(rng);
  return im;
}

// Returns canned images instead of running a model.
class CannedGenerator final : public ImageGenerator {
 public:
  std::vector<ImageTensor> samples;
  std::function<ImageTensor(const ImageTensor&)> expand_fn = [](const ImageTensor& t) { return t; };

  std::vector<ImageTensor> sample(std::int64_t n, std::uint64_t) const override {
    return {samples.begin(), samples.begin() + n};
  }
  std::vector<ImageTensor> expand(std::span<const ImageTensor> targets) const override {
    std::vector<ImageTensor> out;
    for (const auto& t : targets) out.push_back(expand_fn(t));
    return out;
  }
};

struct SmallCorpus {
  datakit::Manifest manifest;
  datakit::InMemoryTileSource source;
};

SmallCorpus small_corpus(std::mt19937_64& rng, int per_split) {
  SmallCorpus c;
  c.manifest.tile_size = 8;
  c.manifest.central_size = 4;
  int k = 0;
  for (auto split : {datakit::Split::Train, datakit::Split::Val, datakit::Split::Test}) {
    for (int i = 0; i < per_split; ++i, ++k) {
      const auto path = "t" + std::to_string(k) + ".png";
      c.source.add(path, noise_image(rng));
      c.manifest.records.push_back({path, "p" + std::to_string(k % 3), std::nullopt, split, 1.0});
    }
  }
  return c;
}

}  // namespace

TEST_SUITE("gaussian_stats") {
  TEST_CASE("copies of one vector have zero covariance") {
    Eigen::MatrixXd f(5, 3);
    f.rowwise() = Eigen::RowVector3d(1.5, -2.0, 0.25);
    const auto s = gaussian_stats(f);
    CHECK(s.count == 5);
    CHECK(s.covariance.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.mean.isApprox(Eigen::Vector3d(1.5, -2.0, 0.25)));
  }

  TEST_CASE("two samples use the n - 1 denominator") {
    Eigen::MatrixXd f(2, 2);
    f << 0, 0, 2, 2;
    const auto s = gaussian_stats(f);
    CHECK(s.mean(0) == doctest::Approx(1.0));
    CHECK(s.mean(1) == doctest::Approx(1.0));
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(s.covariance(i, j) == doctest::Approx(2.0));
  }

  TEST_CASE("matches a scalar two-pass oracle and stays PSD") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 3 + trial * 2, d = 1 + trial % 6;
      const auto f = random_matrix(rng, n, d);
      const auto s = gaussian_stats(f);
      for (int a = 0; a < d; ++a) {
        double ma = 0;
        for (int i = 0; i < n; ++i) ma += f(i, a);
        ma /= n;
        CHECK(std::abs(s.mean(a) - ma) < 1e-10);
        for (int b = 0; b < d; ++b) {
          double mb = 0;
          for (int i = 0; i < n; ++i) mb += f(i, b);
          mb /= n;
          double c = 0;
          for (int i = 0; i < n; ++i) c += (f(i, a) - ma) * (f(i, b) - mb);
          c /= (n - 1);
          CHECK(std::abs(s.covariance(a, b) - c) < 1e-10);
        }
      }
      CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.covariance);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
    }
  }

  TEST_CASE("fewer than two samples is rejected") {
    CHECK_THROWS_AS(gaussian_stats(Eigen::MatrixXd(1, 3)), InvalidInput);
    CHECK_THROWS_AS(gaussian_stats(Eigen::MatrixXd(0, 3)), InvalidInput);
  }
}

TEST_SUITE("sqrtm_psd") {
  TEST_CASE("fixed points and diagonal case") {
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(4, 4);
    CHECK((sqrtm_psd(id) - id).norm() < 1e-12);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(2, 2);
    d(0, 0) = 4;
    d(1, 1) = 9;
    const auto r = sqrtm_psd(d);
    CHECK(r(0, 0) == doctest::Approx(2.0));
    CHECK(r(1, 1) == doctest::Approx(3.0));
    CHECK(std::abs(r(0, 1)) < 1e-12);
  }

  TEST_CASE("random PSD matrices are reconstructed") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
      const int d = 1 + trial % 16;
      const auto b = random_matrix(rng, d, d / 2 + 1);  // often rank deficient
      const Eigen::MatrixXd a = b * b.transpose();
      const auto s = sqrtm_psd(a);
      CHECK((s * s - a).norm() / a.norm() < 1e-6);
      CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
      CHECK(eig.eigenvalues().minCoeff() >= -1e-8);
    }
  }

  TEST_CASE("negative eigenvalues are clamped") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 0) = 1.0;
    a(1, 1) = -1e-12;
    const auto s = sqrtm_psd(a);
    CHECK(s(1, 1) == 0.0);
    CHECK(s(0, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("asymmetric input is rejected") {
    Eigen::MatrixXd a(2, 2);
    a << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(sqrtm_psd(a), InvalidInput);
    CHECK_THROWS_AS(sqrtm_psd(Eigen::MatrixXd(2, 3)), InvalidInput);
  }
}

TEST_SUITE("frechet_distance") {
  TEST_CASE("closed forms") {
    const Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
    CHECK(std::abs(frechet_distance(make_stats(Eigen::Vector2d(0, 0), i2), make_stats(Eigen::Vector2d(3, 4), i2)) - 25.0) <= 1e-9);
    const auto same = make_stats(Eigen::Vector2d(0.3, -1), 2.0 * i2);
    CHECK(frechet_distance(same, same) <= 1e-6);
    Eigen::MatrixXd v4(1, 1), v1(1, 1);
    v4 << 4.0;
    v1 << 1.0;
    CHECK(frechet_distance(make_stats(Eigen::VectorXd::Zero(1), v4), make_stats(Eigen::VectorXd::Zero(1), v1)) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("one-dimensional pairs match the closed form") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> mu(-5, 5), sigma(0.01, 5);
    for (int i = 0; i < 1000; ++i) {
      const double m1 = mu(rng), m2 = mu(rng), s1 = sigma(rng), s2 = sigma(rng);
      Eigen::MatrixXd c1(1, 1), c2(1, 1);
      c1 << s1 * s1;
      c2 << s2 * s2;
      Eigen::VectorXd a(1), b(1);
      a << m1;
      b << m2;
      const double expected = (m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2);
      CHECK(std::abs(frechet_distance(make_stats(a, c1), make_stats(b, c2)) - expected) <= 1e-8);
    }
  }

  TEST_CASE("symmetric and non-negative on random stats") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const int d = 1 + trial % 8;
      const auto f1 = random_matrix(rng, 20, d);
      const Eigen::MatrixXd f2 = random_matrix(rng, 30, d) * 1.7;
      const auto s1 = gaussian_stats(f1), s2 = gaussian_stats(f2);
      const double ab = frechet_distance(s1, s2), ba = frechet_distance(s2, s1);
      CHECK(ab >= 0.0);
      CHECK(std::abs(ab - ba) <= 1e-8);
      CHECK(frechet_distance(s1, s1) <= 1e-6);
    }
  }

  TEST_CASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(frechet_distance(make_stats(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)),
                                     make_stats(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3))),
                    InvalidInput);
  }
}

TEST_SUITE("probe") {
  TEST_CASE("separable blobs are fit exactly") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.3);
    Eigen::MatrixXd x(200, 2);
    std::vector<int> y(200);
    for (int i = 0; i < 200; ++i) {
      y[i] = i % 2;
      x(i, 0) = (y[i] ? 2.0 : -2.0) + n(rng);
      x(i, 1) = (y[i] ? -1.0 : 1.0) + n(rng);
    }
    const auto model = train_probe(x, y);
    CHECK(evaluate_probe(model, x, y).accuracy == 1.0);
    CHECK(model.weights.allFinite());
    CHECK(model.bias.allFinite());
  }

  TEST_CASE("objective gradient matches central differences") {
    std::mt19937_64 rng(2);
    for (int point = 0; point < 20; ++point) {
      const int n = 30, d = 4, k = 3;
      const auto x = random_matrix(rng, n, d);
      std::vector<int> y(n);
      for (int i = 0; i < n; ++i) y[i] = static_cast<int>(rng() % k);
      const Eigen::MatrixXd w = random_matrix(rng, k, d);
      const Eigen::VectorXd b = random_matrix(rng, k, 1);
      const double l2 = 0.1;
      const auto obj = probe_objective(w, b, x, y, l2);
      const double h = 1e-5;
      Eigen::MatrixXd gw(k, d);
      Eigen::VectorXd gb(k);
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < d; ++j) {
          Eigen::MatrixXd wp = w, wm = w;
          wp(i, j) += h;
          wm(i, j) -= h;
          gw(i, j) = (probe_objective(wp, b, x, y, l2).loss - probe_objective(wm, b, x, y, l2).loss) / (2 * h);
        }
        Eigen::VectorXd bp = b, bm = b;
        bp(i) += h;
        bm(i) -= h;
        gb(i) = (probe_objective(w, bp, x, y, l2).loss - probe_objective(w, bm, x, y, l2).loss) / (2 * h);
      }
      const double err = std::sqrt((gw - obj.grad_weights).squaredNorm() + (gb - obj.grad_bias).squaredNorm());
      const double scale = std::sqrt(obj.grad_weights.squaredNorm() + obj.grad_bias.squaredNorm());
      CHECK(err / scale < 1e-4);
    }
  }

  TEST_CASE("strong regularization predicts the class prior") {
    std::mt19937_64 rng(4);
    const auto x = random_matrix(rng, 90, 3);
    std::vector<int> y(90);
    for (int i = 0; i < 90; ++i) y[i] = i < 60 ? 0 : 1;
    ProbeOptions o;
    o.l2 = 1e6;
    const auto model = train_probe(x, y, o);
    CHECK(model.weights.cwiseAbs().maxCoeff() < 1e-4);
    const auto logits = probe_logits(model, x.topRows(1));
    const double p0 = 1.0 / (1.0 + std::exp(logits(0, 1) - logits(0, 0)));
    CHECK(p0 == doctest::Approx(60.0 / 90.0).epsilon(1e-3));
    for (int pred : probe_predict(model, x)) CHECK(pred == 0);
  }

  TEST_CASE("final loss does not depend on the initialization") {
    std::mt19937_64 rng(6);
    const auto x = random_matrix(rng, 120, 5);
    std::vector<int> y(120);
    for (int i = 0; i < 120; ++i) y[i] = (x(i, 0) + 0.5 * x(i, 1) + 0.3 * random_matrix(rng, 1, 1)(0, 0) > 0) ? 1 : 0;
    ProbeOptions a, b;
    a.l2 = b.l2 = 1e-2;
    a.max_iter = b.max_iter = 20000;
    a.tol = b.tol = 1e-9;
    a.init_seed = 1;
    b.init_seed = 2;
    const auto ma = train_probe(x, y, a), mb = train_probe(x, y, b);
    CHECK(std::abs(ma.final_loss - mb.final_loss) < 1e-6);
  }

  TEST_CASE("degenerate labels are rejected") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 2);
    CHECK_THROWS_AS(train_probe(x, {1, 1, 1, 1}), InvalidInput);
    CHECK_THROWS_AS(train_probe(x, {0, 1, 0}), InvalidInput);
    CHECK_THROWS_AS(train_probe(x, {0, 1, -1, 0}), InvalidInput);
  }
}

TEST_SUITE("metrics") {
  TEST_CASE("perfect predictions") {
    const std::vector<int> y{0, 1, 2, 1, 0, 2};
    const auto r = evaluate_predictions(y, y, 3, 1);
    CHECK(r.accuracy == 1.0);
    CHECK(r.balanced_accuracy == 1.0);
    CHECK(r.macro_f1 == 1.0);
    CHECK(r.binary->precision == 1.0);
    CHECK(r.binary->recall == 1.0);
    CHECK(r.binary->f1 == 1.0);
  }

  TEST_CASE("published precision and recall give the published F1") {
    CHECK(std::abs(100.0 * f1_score(0.8832, 0.8225) - 85.18) <= 0.01);
    CHECK(f1_score(0.0, 0.0) == 0.0);
  }

  TEST_CASE("all-positive predictions on a balanced set") {
    std::vector<int> y, pred(100, 1);
    for (int i = 0; i < 100; ++i) y.push_back(i % 2);
    const auto r = evaluate_predictions(y, pred, 2, 1);
    CHECK(r.accuracy == 0.5);
    CHECK(r.binary->recall == 1.0);
    CHECK(r.binary->precision == 0.5);
    CHECK(r.balanced_accuracy == 0.5);
    CHECK(r.binary->f1 == doctest::Approx(2.0 / 3.0));
    CHECK(r.confusion[0][1] == 50);
    CHECK(r.confusion[1][1] == 50);
  }

  TEST_CASE("hand-computed confusion matrix") {
    // truth 0: 3 right, 1 as class 1; truth 1: 2 right, 2 as class 0.
    const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
    const std::vector<int> p{0, 0, 0, 1, 1, 1, 0, 0};
    const auto r = evaluate_predictions(y, p, 2, 1);
    CHECK(r.accuracy == 5.0 / 8.0);
    CHECK(r.binary->precision == 2.0 / 3.0);
    CHECK(r.binary->recall == 0.5);
    CHECK(r.balanced_accuracy == (0.75 + 0.5) / 2.0);
    CHECK(r.per_class_f1[0] == doctest::Approx(2 * 0.6 * 0.75 / 1.35));
    CHECK(r.macro_f1 == doctest::Approx((r.per_class_f1[0] + r.per_class_f1[1]) / 2.0));
  }

  TEST_CASE("unseen label ids are rejected") {
    CHECK_THROWS_AS(evaluate_predictions({0, 3}, {0, 1}, 2), InvalidInput);
    ProbeModel m;
    m.weights = Eigen::MatrixXd::Zero(2, 1);
    m.bias = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(evaluate_probe(m, Eigen::MatrixXd::Zero(2, 1), {0, 2}), InvalidInput);
    CHECK_THROWS_AS(evaluate_probe(m, Eigen::MatrixXd::Zero(2, 3), {0, 1}), InvalidInput);
  }

  TEST_CASE("random predictor has chance balanced accuracy and bounded metrics") {
    std::mt19937_64 rng(9);
    const int k = 4, n = 10000;
    std::vector<int> y(n), p(n);
    for (int i = 0; i < n; ++i) {
      y[i] = i % k;
      p[i] = static_cast<int>(rng() % k);
    }
    const auto r = evaluate_predictions(y, p, k, 0);
    CHECK(std::abs(r.balanced_accuracy - 1.0 / k) <= 0.03);
    for (double v : {r.accuracy, r.balanced_accuracy, r.macro_f1, r.binary->precision, r.binary->recall, r.binary->f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("json mirrors the report") {
    const auto j = to_json(evaluate_predictions({0, 1, 1}, {0, 1, 0}, 2, 1));
    for (const char* key : {"accuracy", "balanced_accuracy", "precision", "recall", "f1", "per_class_f1", "macro_f1", "confusion"})
      CHECK(j.contains(key));
  }
}

TEST_SUITE("embeddings") {
  TEST_CASE("file round trip is lossless") {
    test::TempDir dir;
    Embeddings e;
    e.n = 3;
    e.d = 2;
    e.values = {1.0f, -2.5f, 3.14159f, 1e-30f, -0.0f, 7.0f};
    e.labels = {0, 1, -1};
    e.class_names = {"a", "b"};
    const auto path = dir.path() / "emb.bin";
    write_embeddings(path, e);
    CHECK(std::filesystem::file_size(path) == 6 * sizeof(float));
    CHECK(std::filesystem::exists(embeddings_sidecar(path)));
    const auto back = read_embeddings(path);
    CHECK(back.n == 3);
    CHECK(back.d == 2);
    CHECK(back.labels == e.labels);
    CHECK(back.class_names == e.class_names);
    CHECK(std::memcmp(back.values.data(), e.values.data(), e.values.size() * sizeof(float)) == 0);
  }

  TEST_CASE("missing files surface as io errors") {
    test::TempDir dir;
    CHECK_THROWS_AS(read_embeddings(dir.path() / "none.bin"), IoError);
  }
}

TEST_SUITE("fid") {
  TEST_CASE("pixel means of identical sets give zero") {
    std::mt19937_64 rng(12);
    auto corpus = small_corpus(rng, 6);
    CannedGenerator gen;
    gen.samples = load_split(corpus.manifest, datakit::Split::Train, corpus.source);
    PixelMeanExtractor fx;
    CHECK(fid_sampled(gen, fx, corpus.manifest, corpus.source, 6, 0) <= 1e-6);
  }

  TEST_CASE("disjoint constant sets follow the mean-difference closed form") {
    std::vector<ImageTensor> a, b;
    for (int i = 0; i < 4; ++i) {
      a.push_back(constant_image(-0.5f));
      b.push_back(constant_image(0.25f));
    }
    PixelMeanExtractor fx;
    // Three channels, each differing by 0.75; covariances are zero.
    CHECK(fid_between(fx, a, b) == doctest::Approx(3 * 0.75 * 0.75).epsilon(1e-9));
  }

  TEST_CASE("expanded mode with injected real images gives zero") {
    std::mt19937_64 rng(13);
    auto corpus = small_corpus(rng, 6);
    CannedGenerator gen;
    ChannelStatsExtractor fx;
    FidOptions o;
    o.eval_split = datakit::Split::Train;
    CHECK(fid_expanded(gen, fx, corpus.manifest, corpus.source, o) <= 1e-6);
  }

  TEST_CASE("noise makes expanded scores worse") {
    std::mt19937_64 rng(14);
    auto corpus = small_corpus(rng, 12);
    ChannelStatsExtractor fx;
    CannedGenerator clean;
    CannedGenerator noisy;
    noisy.expand_fn = [&](const ImageTensor& t) {
      auto out = t;
      std::normal_distribution<float> n(0.f, 1.5f);
      for (auto& v : out.data) v = std::clamp(v + n(rng), -1.f, 1.f);
      return out;
    };
    const double base = fid_expanded(clean, fx, corpus.manifest, corpus.source);
    const double corrupted = fid_expanded(noisy, fx, corpus.manifest, corpus.source);
    CHECK(corrupted > base);
  }

  TEST_CASE("invalid requests are rejected") {
    std::mt19937_64 rng(15);
    auto corpus = small_corpus(rng, 4);
    CannedGenerator gen;
    gen.samples = load_split(corpus.manifest, datakit::Split::Train, corpus.source);
    PixelMeanExtractor fx;
    CHECK_THROWS_AS(fid_sampled(gen, fx, corpus.manifest, corpus.source, 1, 0), InvalidInput);
    datakit::Manifest no_test = corpus.manifest;
    std::erase_if(no_test.records, [](const auto& r) { return r.split == datakit::Split::Test; });
    CHECK_THROWS_AS(fid_expanded(gen, fx, no_test, corpus.source), InvalidInput);
  }
}
