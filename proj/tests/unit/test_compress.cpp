#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "ganmem/compress.hpp"
#include "ganmem/data.hpp"

using namespace ganmem;

namespace {

ArchConfig small_arch() {
  ArchConfig c;
  c.image_size = 8;
  c.n_blocks = 1;
  c.block_channel_schedule = {16};
  c.noise_dim = 8;
  return c;
}

Tensor randm(int r, int c, uint64_t seed) {
  Rng rng(seed);
  return rng.normal_tensor({r, c});
}

double fro2(const Tensor& a, const Tensor& b) {
  double acc = 0;
  for (int64_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return acc;
}

Tensor assemble(const SvdTriple& t, int r, int c) {
  Tensor m({r, c});
  int k = static_cast<int>(t.s.size());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double acc = 0;
      for (int q = 0; q < k; ++q) acc += t.U.at(i, q) * t.s[q] * t.V.at(j, q);
      m.at(i, j) = acc;
    }
  return m;
}

}  // namespace

TEST_CASE("sparsity weights follow the two-regime rule") {
  Tensor first = sparsity_weights(5, 1);
  for (int j = 0; j < 5; ++j) CHECK(first[j] == 1.0);
  Tensor later = sparsity_weights(4, 2);
  for (int j = 0; j < 4; ++j) {
    double want = 0.1 + 1.0 / (1.0 + std::exp(-10.0 * j / 4.0));
    CHECK(later[j] == doctest::Approx(want).epsilon(1e-14));
  }
  CHECK(later[0] == doctest::Approx(0.6));  // 0.1 + logistic(0)
  // later indices are penalized harder: encourages low rank
  for (int j = 1; j < 4; ++j) CHECK(later[j] > later[j - 1]);
}

TEST_CASE("penalty value matches its differentiable counterpart") {
  Rng rng(1);
  Tensor s = rng.normal_tensor({6});
  double direct = sparsity_penalty(s, 3, 0.01);
  double graph = sparsity_penalty_var(ganmem::ad::leaf(s), 3, 0.01).val()[0];
  CHECK(direct == doctest::Approx(graph).epsilon(1e-14));
  double manual = 0;
  Tensor eta = sparsity_weights(6, 3);
  for (int j = 0; j < 6; ++j) manual += 0.01 * eta[j] * std::fabs(s[j]);
  CHECK(direct == doctest::Approx(manual).epsilon(1e-14));
}

TEST_CASE("svd reconstructs the matrix") {
  Tensor m = randm(7, 5, 2);
  SvdTriple t = full_svd(m);
  CHECK(t.s.size() == 5);
  for (int i = 1; i < 5; ++i) CHECK(t.s[i] <= t.s[i - 1]);
  CHECK(fro2(m, assemble(t, 7, 5)) < 1e-20);
}

TEST_CASE("energy truncation matches the prefix-enumeration oracle") {
  for (double x : {30.0, 50.0, 80.0, 90.0, 95.0, 100.0}) {
    for (uint64_t seed = 0; seed < 10; ++seed) {
      int r = 4 + static_cast<int>(seed % 5), c = 3 + static_cast<int>(seed % 7);
      Tensor m = randm(r, c, 100 + seed);
      SvdTriple full = full_svd(m);
      long double total = 0;
      for (int64_t i = 0; i < full.s.size(); ++i)
        total += static_cast<long double>(full.s[i]) * full.s[i];
      int oracle = static_cast<int>(full.s.size());
      long double acc = 0;
      for (int64_t i = 0; i < full.s.size(); ++i) {
        acc += static_cast<long double>(full.s[i]) * full.s[i];
        if (acc >= total * x / 100.0) {
          oracle = static_cast<int>(i) + 1;
          break;
        }
      }
      SvdTriple t = energy_truncate(m, x);
      CHECK(static_cast<int>(t.s.size()) == oracle);
      double err = fro2(m, assemble(t, r, c));
      CHECK(err <= (1.0 - x / 100.0) * static_cast<double>(total) + 1e-9);
    }
  }
}

TEST_CASE("zero matrix truncates to empty factors") {
  SvdTriple t = energy_truncate(Tensor({4, 4}), 90.0);
  CHECK(t.s.size() == 0);
  CHECK_THROWS_AS(energy_truncate(randm(3, 3, 1), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(energy_truncate(randm(3, 3, 1), 101.0), std::invalid_argument);
}

TEST_CASE("knowledge base appends columns without touching old ones") {
  KnowledgeBase kb;
  Tensor u1 = randm(4, 2, 10), v1 = randm(3, 2, 11);
  kb_update(kb, "G/B0/L0/Gamma", u1, v1);
  CHECK(kb.entries.at("G/B0/L0/Gamma").width() == 2);
  uint64_t h1 = tensor_hash(kb.entries.at("G/B0/L0/Gamma").L);

  Tensor u2 = randm(4, 3, 12), v2 = randm(3, 3, 13);
  kb_update(kb, "G/B0/L0/Gamma", u2, v2);
  const auto& e = kb.entries.at("G/B0/L0/Gamma");
  CHECK(e.width() == 5);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) CHECK(e.L.at(i, j) == u1.at(i, j));
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) CHECK(e.L.at(i, 2 + j) == u2.at(i, j));
  (void)h1;

  CHECK_THROWS_AS(kb_update(kb, "G/B0/L0/Gamma", randm(5, 1, 14), randm(3, 1, 15)),
                  std::invalid_argument);
}

TEST_CASE("reconstruct stacks the shared basis and the residual") {
  KnowledgeBase kb;
  Tensor L = randm(4, 2, 20), R = randm(3, 2, 21);
  kb_update(kb, "k", L, R);
  MatrixFactor f;
  f.kb_snapshot = 2;
  f.lambda = Tensor({2}, {0.5, -1.5});
  Rng rng(22);
  f.U = randm(4, 2, 23);
  f.s = rng.normal_tensor({2});
  f.V = randm(3, 2, 24);
  Tensor got = reconstruct(kb, "k", f);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double want = 0;
      for (int q = 0; q < 2; ++q) {
        want += L.at(i, q) * f.lambda[q] * R.at(j, q);
        want += f.U.at(i, q) * f.s[q] * f.V.at(j, q);
      }
      CHECK(got.at(i, j) == doctest::Approx(want).epsilon(1e-12));
    }
  MatrixFactor bad = f;
  bad.kb_snapshot = 3;  // wider than the KB
  CHECK_THROWS_AS(reconstruct(kb, "k", bad), std::invalid_argument);
}

TEST_CASE("energy policy selects blocks and honors the discriminator flag") {
  EnergyPolicy p;
  CHECK(p.energy_for("G/B0/L0", false) == 80.0);
  CHECK(p.energy_for("G/B2/sc", false) == 90.0);
  CHECK(p.energy_for("G/fc", false) < 0);   // FC never factorized
  CHECK(p.energy_for("G/B9/L0", false) < 0);
  CHECK(p.energy_for("D/B1/L0", true) == 80.0);
  p.compress_discriminator = false;
  CHECK(p.energy_for("D/B1/L0", true) < 0);
  p.block_energy[0] = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("compressed training grows the kb and freezes the base") {
  BaseModel m = build_models(small_arch(), 30);
  uint64_t before = m.weights_hash();
  ToyTaskSpec dspec;
  dspec.task_index = 1;
  dspec.n_images = 16;
  dspec.image_size = 8;
  Dataset data = make_toy_dataset(dspec);
  TrainHyper h;
  h.steps = 3;
  h.batch_size = 4;
  h.seed = 31;
  KnowledgeBase kb;
  EnergyPolicy policy;
  auto r1 = train_task_compressed(m, data, h, 1, kb, policy);
  CHECK(m.weights_hash() == before);
  CHECK(kb.n_tasks() == 1);
  CHECK_FALSE(kb.entries.empty());
  CHECK(r1.compressed_matrix_params > 0);
  CHECK(r1.naive_matrix_params > 0);
  CHECK(r1.materialized.finite());
  // materialization reproduces the stored factorized matrices
  StyleSet again = materialize(m, kb, r1.style);
  CHECK(again.hash() == r1.materialized.hash());

  // second task records a wider snapshot and can reuse the basis
  dspec.task_index = 2;
  Dataset data2 = make_toy_dataset(dspec);
  auto r2 = train_task_compressed(m, data2, h, 2, kb, policy);
  CHECK(kb.n_tasks() == 2);
  for (const auto& [key, f] : r2.style.factors) {
    CHECK(f.kb_snapshot == static_cast<int>(r1.style.factors.at(key).s.size()));
    CHECK(f.lambda.size() == f.kb_snapshot);
  }
}

TEST_CASE("compressed training is deterministic") {
  BaseModel m = build_models(small_arch(), 32);
  ToyTaskSpec dspec;
  dspec.task_index = 1;
  dspec.n_images = 16;
  dspec.image_size = 8;
  Dataset data = make_toy_dataset(dspec);
  TrainHyper h;
  h.steps = 2;
  h.batch_size = 4;
  h.seed = 33;
  KnowledgeBase kb1, kb2;
  EnergyPolicy policy;
  auto a = train_task_compressed(m, data, h, 1, kb1, policy);
  auto b = train_task_compressed(m, data, h, 1, kb2, policy);
  CHECK(a.materialized.hash() == b.materialized.hash());
  CHECK(kb1.hash() == kb2.hash());
}
