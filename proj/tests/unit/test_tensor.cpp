#include "doctest.h"

#include "ganmem/rng.hpp"
#include "ganmem/tensor.hpp"

using namespace ganmem;

TEST_CASE("tensor shape and storage") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  t.at(1, 2) = 4.5;
  CHECK(t[5] == 4.5);
  CHECK(t.shape_str() == "[2,3]");
  CHECK_THROWS_AS(Tensor({2}, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("all_finite flags nan and inf") {
  Tensor t({3});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("tensor hash is content-sensitive") {
  Tensor a({4}, {1, 2, 3, 4});
  Tensor b({4}, {1, 2, 3, 4});
  Tensor c({4}, {1, 2, 3, 5});
  CHECK(tensor_hash(a) == tensor_hash(b));
  CHECK(tensor_hash(a) != tensor_hash(c));
}

TEST_CASE("rng streams are deterministic and mix-separated") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
  CHECK(Rng::mix(1, 2) != Rng::mix(1, 3));
  CHECK(Rng::mix(1, 2) != Rng::mix(2, 2));
  Rng n(7);
  double acc = 0, acc2 = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    double v = n.normal();
    acc += v;
    acc2 += v * v;
  }
  CHECK(std::fabs(acc / trials) < 0.03);
  CHECK(acc2 / trials == doctest::Approx(1.0).epsilon(0.05));
}
