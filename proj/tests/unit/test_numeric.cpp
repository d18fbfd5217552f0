#include <doctest.h>

#include <string>

#include <cmath>
#include <vector>

#include "rrl/numeric/gradcheck.hpp"
#include "rrl/numeric/ops.hpp"
#include "rrl/numeric/random.hpp"

using namespace rrl;

namespace {

Vector values(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector random_values(Index n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

}  // namespace

TEST_CASE("splitmix64 and xorshift64* reproduce reference streams") {
  // Reference values from a separate Python implementation of both generators.
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
  CHECK(splitmix64(1) == 0x910a2dec89025cc1ULL);
  Rng rng(42);
  CHECK(rng.next() == 0x31b0ece7c4f697a2ULL);
  CHECK(rng.next() == 0x9008a3b1cb686f03ULL);
  CHECK(rng.next() == 0x7c7173abd97be16fULL);
  Rng u(7);
  CHECK(u.uniform() == 0.08170555950360558);
}

TEST_CASE("forked streams do not depend on parent draws") {
  Rng a(5), b(5);
  for (int i = 0; i < 10; ++i) b.next();
  Rng fa = a.fork(3), fb = b.fork(3);
  for (int i = 0; i < 5; ++i) CHECK(fa.next() == fb.next());
  CHECK(a.fork(3).next() != a.fork(4).next());
}

TEST_CASE("matmul examples") {
  Tape tape;
  const DiffArray x = tape.constant({2, 2}, values({5, -1, 2, 7}));
  const DiffArray id = tape.constant({2, 2}, values({1, 0, 0, 1}));
  CHECK(matmul(id, x).data() == x.data());

  const DiffArray zeros = tape.constant({2, 3}, Vector::Zero(6));
  const DiffArray y = tape.constant({3, 2}, random_values(6, 1));
  const DiffArray z = matmul(zeros, y);
  CHECK(z.shape() == Shape{2, 2});
  CHECK(z.data().isZero(0.0));

  const DiffArray a = tape.constant({2, 2}, values({1, 2, 3, 4}));
  const DiffArray ones = tape.constant({2, 1}, values({1, 1}));
  const DiffArray p = matmul(a, ones);
  CHECK(p.data() == values({3, 7}));
}

TEST_CASE("cosine similarity examples") {
  Tape tape;
  auto cs = [&](Vector u, Vector v) {
    return cosine_sim(tape.constant({2}, std::move(u)), tape.constant({2}, std::move(v))).item();
  };
  CHECK(cs(values({1, 0}), values({1, 0})) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cs(values({1, 0}), values({0, 1})) == 0.0);
  CHECK(cs(values({1, 1}), values({1, 0})) == doctest::Approx(0.7071067811865476).epsilon(1e-15));
  // Zero vectors hit the norm floor instead of dividing by zero.
  CHECK(cs(values({0, 0}), values({1, 0})) == 0.0);
}

TEST_CASE("check_gradient on a linear function is exact") {
  const Vector x = random_values(7, 3, 10.0);
  const double err = check_gradient([](Tape&, const DiffArray& v) { return sum(v); }, {7}, x, 1e-5);
  CHECK(err < 1e-9);
  Tape tape;
  const DiffArray v = tape.variable({7}, x);
  tape.backward(sum(v));
  CHECK(v.grad() == Vector::Ones(7));
}

TEST_CASE("check_gradient on cosine similarity") {
  const Vector fixed = random_values(5, 11);
  const ScalarFunction f = [&](Tape& tape, const DiffArray& v) {
    return cosine_sim(v, tape.constant({5}, fixed));
  };
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    CHECK(check_gradient(f, {5}, random_values(5, 100 + seed), 1e-5) < 1e-6);
  }
}

TEST_CASE("primitive gradients match finite differences") {
  const double tol = 1e-6;
  const Vector other = random_values(12, 21, 10.0);
  struct Case {
    const char* name;
    Shape shape;
    ScalarFunction f;
  };
  const Vector bias = random_values(4, 22);
  const Vector gate = random_values(3, 23);
  const std::vector<Case> cases = {
      {"matmul", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(matmul(x, t.constant({4, 3}, other))); }},
      {"transpose", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(mul(transpose(x), t.constant({4, 3}, other))); }},
      {"mul", {12}, [&](Tape& t, const DiffArray& x) { return sum(mul(x, mul(x, t.constant({12}, other)))); }},
      {"sub_scale", {12}, [&](Tape& t, const DiffArray& x) { return sum(mul(scale(x, 0.3) - t.constant({12}, other), x)); }},
      {"gelu", {12}, [](Tape&, const DiffArray& x) { return sum(gelu(add_scalar(scale(x, 0.1), 0.5))); }},
      {"exp", {12}, [](Tape&, const DiffArray& x) { return sum(exp(scale(x, 0.1))); }},
      {"log", {12}, [](Tape&, const DiffArray& x) { return sum(log(add_scalar(mul(x, x), 1.0))); }},
      {"add_row", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(mul(add_row(x, t.constant({4}, bias)), x)); }},
      {"mul_rows", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(mul(mul_rows(x, t.constant({3}, gate)), x)); }},
      {"mean_rows", {3, 4}, [&](Tape&, const DiffArray& x) { return sum(mul(mean_rows(x), mean_rows(x))); }},
      {"cosine_rows", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(cosine_rows(x, t.constant({3, 4}, other))); }},
      {"l2_normalize", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(mul(l2_normalize(x), t.constant({3, 4}, other))); }},
      {"softmax", {3, 4},
       [&](Tape& t, const DiffArray& x) { return sum(mul(softmax(scale(x, 0.2), 1), t.constant({3, 4}, other))); }},
      {"layer_norm", {3, 4},
       [&](Tape& t, const DiffArray& x) {
         return sum(mul(layer_norm(x, t.constant({4}, bias), t.constant({4}, bias)), t.constant({3, 4}, other)));
       }},
      {"batch_norm", {3, 4},
       [&](Tape& t, const DiffArray& x) {
         return sum(mul(batch_norm(x, t.constant({4}, bias), t.constant({4}, bias), nullptr, true),
                        t.constant({3, 4}, other)));
       }},
      {"gather_concat", {3, 4},
       [&](Tape&, const DiffArray& x) {
         const std::vector<Index> rows{2, 0, 2};
         const std::vector<DiffArray> parts{gather_rows(x, rows), block(x, 1, 1, 2, 2)};
         const DiffArray joined = concat(std::vector<DiffArray>{reshape(parts[0], {12}), reshape(parts[1], {4})}, 0);
         return sum(mul(joined, joined));
       }},
      {"cross_entropy", {3, 4},
       [](Tape&, const DiffArray& x) {
         const std::vector<int> targets{1, 3, 0};
         return cross_entropy(scale(x, 0.2), targets);
       }},
  };
  for (const Case& c : cases) {
    const std::string name = c.name;
    CAPTURE(name);
    const Vector x = random_values(shape_size(c.shape), 31, 10.0);
    CHECK(check_gradient(c.f, c.shape, x, 1e-5) < tol);
  }
}

TEST_CASE("conv2d gradient and zero padding") {
  const Vector w = random_values(3 * 3 * 2 * 3, 41);
  const Vector b = random_values(3, 42);
  const ScalarFunction f = [&](Tape& t, const DiffArray& x) {
    const DiffArray y = conv2d(x, t.constant({3, 3, 2, 3}, w), t.constant({3}, b), 1, 1);
    return sum(mul(y, y));
  };
  CHECK(check_gradient(f, {4, 5, 2}, random_values(40, 43), 1e-6) < 1e-6);

  Tape tape;
  const DiffArray x = tape.constant({4, 5, 2}, random_values(40, 44));
  const DiffArray y = conv2d(x, tape.constant({3, 3, 2, 3}, w), tape.constant({3}, b), 1, 1);
  CHECK(y.shape() == Shape{4, 5, 3});
}

TEST_CASE("stop_gradient forwards values and blocks gradients") {
  Tape tape;
  const DiffArray x = tape.variable({4}, random_values(4, 51));
  const DiffArray s = stop_gradient(x);
  CHECK(s.data() == x.data());
  tape.backward(sum(mul(s, s)));
  CHECK(x.grad().isZero(0.0));
}

TEST_CASE("softmax rows are positive and sum to one") {
  Tape tape;
  const DiffArray x = tape.constant({5, 6}, random_values(30, 61, 10.0));
  const DiffArray s = softmax(x, 1);
  const auto m = s.matrix();
  for (Index r = 0; r < 5; ++r) {
    CHECK(std::abs(m.row(r).sum() - 1.0) <= 1e-12);
    CHECK((m.row(r).array() > 0.0).all());
  }
}

TEST_CASE("reductions are reproducible") {
  const Vector x = random_values(1000, 71, 10.0);
  Tape t1, t2;
  CHECK(sum(t1.constant({1000}, x)).item() == sum(t2.constant({1000}, x)).item());
  const DiffArray a1 = t1.constant({20, 50}, x), a2 = t2.constant({20, 50}, x);
  CHECK(matmul(a1, transpose(a1)).data() == matmul(a2, transpose(a2)).data());
}

TEST_CASE("multi-output backward with explicit seeds") {
  Tape tape;
  const DiffArray x = tape.variable({3}, values({1, 2, 3}));
  const DiffArray y = scale(x, 2.0);
  const std::vector<DiffArray> outputs{y};
  const std::vector<Vector> seeds{values({1, 0, -1})};
  tape.backward(outputs, seeds);
  CHECK(x.grad() == values({2, 0, -2}));
}
