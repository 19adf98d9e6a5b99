#include <doctest.h>

#include <cmath>

#include "eg/errors.hpp"
#include "eg/parallel.hpp"
#include "eg/tensor.hpp"

using namespace eg;

TEST_CASE("tensor construction and shape bookkeeping") {
    Tensor<double> t({2, 3});
    CHECK(t.rank() == 2);
    CHECK(t.size() == 6);
    CHECK(t.extent(0) == 2);
    CHECK(t.extent(1) == 3);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);

    CHECK_THROWS_AS(Tensor<double>({2, 0}), DimError);
    CHECK_THROWS_AS(Tensor<double>(std::vector<std::size_t>{}), DimError);
    CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0, 2.0}), DimError);

    Tensor<double> f = Tensor<double>::full({2, 2}, 3.5);
    CHECK(f[0] == 3.5);
    CHECK(f[3] == 3.5);

    Tensor<double> r = f.reshaped({4, 1});
    CHECK(r.shape() == std::vector<std::size_t>{4, 1});
    CHECK(r[2] == 3.5);
    CHECK_THROWS_AS(f.reshaped({3, 1}), DimError);
}

TEST_CASE("matmul against identity and hand-computed products") {
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> m({2, 2}, {1, 2, 3, 4});
    Tensor<double> r = matmul(eye, m);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 2.0);
    CHECK(r[2] == 3.0);
    CHECK(r[3] == 4.0);

    // [[1,2],[3,4]] . [[5,6],[7,8]] = [[19,22],[43,50]]
    Tensor<double> b({2, 2}, {5, 6, 7, 8});
    Tensor<double> p = matmul(m, b);
    CHECK(p[0] == 19.0);
    CHECK(p[1] == 22.0);
    CHECK(p[2] == 43.0);
    CHECK(p[3] == 50.0);

    Tensor<double> bad({3, 2});
    CHECK_THROWS_AS(matmul(m, bad), DimError);
}

TEST_CASE("matmul is bit-identical across thread counts") {
    Tensor<float> a({64, 32});
    Tensor<float> b({32, 48});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::sin(0.1 * static_cast<double>(i));
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::cos(0.2 * static_cast<double>(i));

    set_max_threads(1);
    Tensor<float> r1 = matmul(a, b);
    set_max_threads(8);
    Tensor<float> r8 = matmul(a, b);
    set_max_threads(1);
    REQUIRE(r1.size() == r8.size());
    for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i] == r8[i]);
}

TEST_CASE("transpose and elementwise ops") {
    Tensor<double> m({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor<double> t = transpose(m);
    CHECK(t.shape() == std::vector<std::size_t>{3, 2});
    CHECK(t.at2(0, 1) == 4.0);
    CHECK(t.at2(2, 0) == 3.0);

    Tensor<double> a({3}, {1, 2, 3});
    Tensor<double> b({3}, {10, 20, 30});
    Tensor<double> s = add(a, b);
    CHECK(s[2] == 33.0);
    Tensor<double> p = mul(a, b);
    CHECK(p[1] == 40.0);
    Tensor<double> sc = scale(a, 2.0);
    CHECK(sc[2] == 6.0);
    Tensor<double> mismatched({2}, {1, 2});
    CHECK_THROWS_AS(add(a, mismatched), DimError);
}

TEST_CASE("reductions use the population forms") {
    Tensor<double> ones({4}, {1, 1, 1, 1});
    CHECK(reduce_std(ones) == 0.0);

    // population std of [0,2]: sqrt(((0-1)^2+(2-1)^2)/2) = 1
    Tensor<double> two({2}, {0, 2});
    CHECK(reduce_std(two) == doctest::Approx(1.0).epsilon(1e-12));

    Tensor<double> m({2, 2}, {1, 2, 3, 4});
    CHECK(reduce_sum(m) == 10.0);
    CHECK(reduce_mean(m) == 2.5);

    Tensor<double> rs = reduce_sum_axis(m, 0);
    CHECK(rs.shape() == std::vector<std::size_t>{2});
    CHECK(rs[0] == 4.0);
    CHECK(rs[1] == 6.0);
    Tensor<double> cs = reduce_sum_axis(m, 1);
    CHECK(cs[0] == 3.0);
    CHECK(cs[1] == 7.0);
}

TEST_CASE("has_nonfinite detects NaN and infinity") {
    Tensor<float> t({3}, {1.0f, 2.0f, 3.0f});
    CHECK_FALSE(has_nonfinite(t));
    t[1] = std::numeric_limits<float>::infinity();
    CHECK(has_nonfinite(t));
    t[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK(has_nonfinite(t));
}

TEST_CASE("cast converts between precisions") {
    Tensor<double> d({2}, {1.5, -2.25});
    Tensor<float> f = d.cast<float>();
    CHECK(f[0] == 1.5f);
    CHECK(f[1] == -2.25f);
}
