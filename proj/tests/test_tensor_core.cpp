#include <gtest/gtest.h>

#include <cmath>

#include "hcpn/grad_check.hpp"
#include "hcpn/ops.hpp"
#include "hcpn/random.hpp"

using namespace hcpn;

namespace {

using TD = Tensor<double>;

TD mat(std::size_t r, std::size_t c, std::vector<double> v) { return TD({r, c}, std::move(v)); }

// Triple-loop reference product.
TD matmul_oracle(const TD& a, const TD& b) {
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t t = 0; t < k; ++t) out[i * n + j] += a[i * k + t] * b[t * n + j];
    return TD({m, n}, out);
}

// tanh through a truncated exponential series; no libm involved.
double series_tanh(double x) {
    auto series_exp = [](double y) {
        double term = 1, total = 1;
        for (int n = 1; n < 40; ++n) {
            term *= y / n;
            total += term;
        }
        return total;
    };
    const double e2 = series_exp(2 * x);
    return (e2 - 1) / (e2 + 1);
}

void expect_near_all(const TD& got, const std::vector<double>& want, double tol) {
    ASSERT_EQ(got.numel(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "element " << i;
}

}  // namespace

TEST(Matmul, SmallProductMatchesTripleLoop) {
    const TD a = mat(2, 2, {1, 2, 3, 4});
    const TD b = mat(2, 2, {5, 6, 7, 8});
    const TD oracle = matmul_oracle(a, b);
    expect_near_all(oracle, {19, 22, 43, 50}, 0);
    expect_near_all(matmul(a, b), {19, 22, 43, 50}, 0);
}

TEST(Matmul, IdentityAndZero) {
    Rng rng(3);
    const TD a = rng.uniform_tensor<double>({3, 4}, -1, 1);
    std::vector<double> eye(16, 0.0);
    for (int i = 0; i < 4; ++i) eye[i * 5] = 1;
    EXPECT_TRUE(bitwise_equal(matmul(a, TD({4, 4}, eye)), a));
    const TD z = matmul(a, TD({4, 2}));
    for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    try {
        matmul(TD({2, 3}), TD({2, 3}));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos);
    }
}

TEST(Matmul, RandomMatchesOracleAndIsAssociative) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const TD a = rng.uniform_tensor<double>({5, 5}, -1, 1);
        const TD b = rng.uniform_tensor<double>({5, 5}, -1, 1);
        const TD c = rng.uniform_tensor<double>({5, 5}, -1, 1);
        const TD ab = matmul(a, b);
        const TD oracle = matmul_oracle(a, b);
        for (std::size_t i = 0; i < 25; ++i) EXPECT_NEAR(ab[i], oracle[i], 1e-12);
        const TD left = matmul(ab, c);
        const TD right = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < 25; ++i) {
            EXPECT_LE(std::abs(left[i] - right[i]), 1e-9 * std::max(1.0, std::abs(left[i])));
        }
    }
}

TEST(Softmax, ClosedForms) {
    expect_near_all(softmax(mat(1, 2, {0, 0}), Axis::Row), {0.5, 0.5}, 1e-15);
    expect_near_all(softmax(mat(1, 2, {0, std::log(3.0)}), Axis::Row), {0.25, 0.75}, 1e-15);
}

TEST(Softmax, AxisSumsAndShiftInvariance) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const TD s = rng.uniform_tensor<double>({4, 4}, -5, 5);
        const TD col = softmax(s, Axis::Col);
        const TD row = softmax(s, Axis::Row);
        for (std::size_t j = 0; j < 4; ++j) {
            double cs = 0, rs = 0;
            for (std::size_t i = 0; i < 4; ++i) {
                cs += col[i * 4 + j];
                rs += row[j * 4 + i];
                EXPECT_GT(col[i * 4 + j], 0);
            }
            EXPECT_NEAR(cs, 1, 1e-6);
            EXPECT_NEAR(rs, 1, 1e-6);
        }
        // Shift every row by its own constant.
        std::vector<double> shifted(s.values().begin(), s.values().end());
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) shifted[i * 4 + j] += 100.0 * static_cast<double>(i) - 37.5;
        const TD row2 = softmax(TD({4, 4}, shifted), Axis::Row);
        for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(row2[i], row[i], 1e-7);
    }
}

TEST(Softmax, LargeLogitsStayFinite) {
    const TD s = mat(1, 3, {1000, 1001, -1000});
    const TD y = softmax(s, Axis::Row);
    EXPECT_TRUE(y.all_finite());
    EXPECT_NEAR(y[0] + y[1] + y[2], 1, 1e-12);
}

TEST(Conv2d, PointwiseIdentity) {
    Rng rng(1);
    const TD x = rng.uniform_tensor<double>({1, 5, 4}, 0, 1);
    const TD k({1, 1, 1, 1}, {1.0});
    EXPECT_TRUE(bitwise_equal(conv2d(x, k), x));
}

TEST(Conv2d, AveragingConstantImage) {
    const double c = 0.7;
    const TD x = TD::full({1, 5, 5}, c);
    const TD k = TD::full({1, 1, 3, 3}, 1.0 / 9.0);
    const TD y = conv2d(x, k);
    for (std::size_t r = 1; r < 4; ++r)
        for (std::size_t col = 1; col < 4; ++col) EXPECT_NEAR(y[r * 5 + col], c, 1e-12);
    EXPECT_NEAR(y[0], c * 4.0 / 9.0, 1e-12);
    EXPECT_NEAR(y[2], c * 6.0 / 9.0, 1e-12);
}

TEST(Conv2d, FrozenNestedLoopTable) {
    // 4x4 input 1..16, Sobel-x kernel; expected values from a nested-loop
    // cross-correlation with zero padding.
    std::vector<double> xs(16);
    for (int i = 0; i < 16; ++i) xs[i] = i + 1;
    const TD x({1, 4, 4}, xs);
    const TD k({1, 1, 3, 3}, {1, 0, -1, 2, 0, -2, 1, 0, -1});
    expect_near_all(conv2d(x, k), {-10, -6, -6, 13, -24, -8, -8, 28, -40, -8, -8, 44, -38, -6, -6, 41}, 1e-12);
    expect_near_all(conv2d(x, k, Conv2dOptions{1, 1, Padding::Valid}), {-8, -8, -8, -8}, 1e-12);
}

TEST(Conv2d, StrideDilationShapes) {
    const TD x({3, 8, 6});
    EXPECT_EQ(conv2d(x, TD({4, 3, 3, 3}), Conv2dOptions{2, 1, Padding::Same}).shape(), (Shape{4, 4, 3}));
    EXPECT_EQ(conv2d(x, TD({4, 3, 3, 3}), Conv2dOptions{1, 2, Padding::Same}).shape(), (Shape{4, 8, 6}));
    EXPECT_EQ(conv2d(x, TD({4, 3, 3, 3}), Conv2dOptions{1, 2, Padding::Valid}).shape(), (Shape{4, 4, 2}));
    EXPECT_THROW(conv2d(x, TD({4, 3, 3, 3}), Conv2dOptions{1, 3, Padding::Valid}), DimensionError);
}

TEST(Conv2d, KernelChannelMismatch) {
    EXPECT_THROW(conv2d(TD({3, 4, 4}), TD({2, 2, 3, 3})), DimensionError);
    EXPECT_THROW(conv2d(TD({3, 4, 4}), TD({2, 3, 2, 2})), DimensionError);
}

TEST(Resize, GapAndIdentity) {
    const TD x = TD::full({2, 3, 3}, 1.25);
    const TD g = global_avg_pool(x);
    EXPECT_EQ(g.shape(), (Shape{2, 1, 1}));
    EXPECT_DOUBLE_EQ(g[0], 1.25);
    Rng rng(2);
    const TD r = rng.uniform_tensor<double>({2, 3, 4}, -1, 1);
    EXPECT_TRUE(bitwise_equal(resize_bilinear(r, 3, 4), r));
}

TEST(Resize, HandInterpolatedGrid) {
    const TD x({1, 2, 2}, {0, 1, 2, 3});
    expect_near_all(resize_bilinear(x, 3, 3), {0, 0.5, 1, 1, 1.5, 2, 2, 2.5, 3}, 1e-15);
}

TEST(Resize, ExactForAffineImages) {
    std::vector<double> v(5 * 7);
    for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 7; ++x) v[y * 7 + x] = 0.5 + 2.0 * static_cast<double>(y) - 0.75 * static_cast<double>(x);
    const TD img({1, 5, 7}, v);
    const TD up = resize_bilinear(img, 9, 13);
    for (std::size_t y = 0; y < 9; ++y)
        for (std::size_t x = 0; x < 13; ++x) {
            const double sy = y * 4.0 / 8.0, sx = x * 6.0 / 12.0;
            EXPECT_NEAR(up[y * 13 + x], 0.5 + 2.0 * sy - 0.75 * sx, 1e-12);
        }
    EXPECT_THROW(resize_bilinear(img, 0, 3), DimensionError);
}

TEST(Normalize, ClosedFormsAndZeroInput) {
    expect_near_all(normalize(TD({1, 1, 2}, {3, 4}), NormMode::L2Channel), {0.6, 0.8}, 1e-8);
    const TD z = normalize(TD({3, 2, 2}), NormMode::ChannelPos);
    for (double v : z.values()) EXPECT_EQ(v, 0.0);
}

TEST(Normalize, UnitNorms) {
    Rng rng(8);
    const TD x = rng.uniform_tensor<double>({3, 4, 4}, -1, 1);
    const TD pos = normalize(x, NormMode::ChannelPos);
    for (std::size_t p = 0; p < 16; ++p) {
        double ss = 0;
        for (std::size_t c = 0; c < 3; ++c) ss += pos[c * 16 + p] * pos[c * 16 + p];
        EXPECT_NEAR(std::sqrt(ss), 1, 1e-6);
    }
    std::vector<double> v(x.values().begin(), x.values().end());
    std::fill(v.begin() + 16, v.begin() + 32, 0.0);  // channel 1 identically zero
    const TD ch = normalize(TD(x.shape(), v), NormMode::L2Channel);
    for (std::size_t c = 0; c < 3; ++c) {
        double ss = 0;
        for (std::size_t p = 0; p < 16; ++p) ss += ch[c * 16 + p] * ch[c * 16 + p];
        EXPECT_NEAR(std::sqrt(ss), c == 1 ? 0.0 : 1.0, 1e-6);
    }
}

TEST(Elementwise, ClosedForms) {
    const TD zero({1, 2, 2});
    const TD half = sigmoid(zero);
    for (double v : half.values()) EXPECT_EQ(v, 0.5);
    Rng rng(4);
    const TD v = rng.uniform_tensor<double>({2, 3, 3}, -1, 1);
    EXPECT_TRUE(bitwise_equal(hadamard(v, TD::full(v.shape(), 1.0)), v));
    const TD t = hcpn::tanh(TD({3}, {-1, 0, 1}));
    expect_near_all(t, {series_tanh(-1), 0, series_tanh(1)}, 1e-12);
    expect_near_all(t, {-0.7616, 0, 0.7616}, 1e-4);
    expect_near_all(relu(TD({3}, {-1, 0, 2})), {0, 0, 2}, 0);
}

TEST(Elementwise, ChannelBroadcast) {
    const TD v = TD::full({2, 2, 2}, 2.0);
    const TD s({2, 1, 1}, {3, -1});
    expect_near_all(hadamard(v, s), {6, 6, 6, 6, -2, -2, -2, -2}, 0);
    expect_near_all(add(s, v), {5, 5, 5, 5, 1, 1, 1, 1}, 0);
    EXPECT_THROW(add(TD({2, 2, 2}), TD({3, 1, 1})), DimensionError);
    EXPECT_THROW(add(TD({2, 2}), TD({2, 2, 2})), DimensionError);
}

TEST(Backward, ClosedFormGradients) {
    Rng rng(6);
    Tape<double> tape;
    const TD w = tape.watch(rng.uniform_tensor<double>({2, 3}, -1, 1));
    const TD a = tape.watch(rng.uniform_tensor<double>({2, 3}, -1, 1));
    const TD unused = tape.watch(rng.uniform_tensor<double>({4}, -1, 1));
    const TD loss = add(sum(w), sum(hadamard(a, a)));
    tape.backward(loss);
    const TD gw = tape.grad(w);
    for (double g : gw.values()) EXPECT_EQ(g, 1.0);
    const TD ga = tape.grad(a);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_DOUBLE_EQ(ga[i], 2 * a[i]);
    const TD gu = tape.grad(unused);
    EXPECT_EQ(gu.shape(), unused.shape());
    for (double g : gu.values()) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(tape.grad(loss).item(), 1.0);
}

TEST(Backward, NonScalarLossIsContractError) {
    Tape<double> tape;
    const TD a = tape.watch(TD({2, 2}));
    EXPECT_THROW(tape.backward(relu(a)), ContractError);
}

TEST(GradCheck, QuadraticAndSoftmax) {
    Rng rng(9);
    const TD x = rng.uniform_tensor<double>({3, 4}, -1, 1);
    const auto quad = grad_check([](const std::vector<TD>& in) { return sum(hadamard(in[0], in[0])); }, {x});
    EXPECT_LT(quad.max_rel_error, 1e-9);
    const auto soft = grad_check(
        [](const std::vector<TD>& in) {
            const TD y = softmax(in[0], Axis::Col);
            return sum(hadamard(y, y));
        },
        {x});
    EXPECT_LT(soft.max_rel_error, 1e-6);
    EXPECT_EQ(soft.probes, 12u);
}

TEST(GradCheck, EveryPrimitiveOnRandomShapes) {
    Rng rng(21);
    auto u = [&](Shape s) { return rng.uniform_tensor<double>(std::move(s), -1, 1); };
    // Weight the outputs with a fixed random tensor so no gradient is symmetric.
    auto weighted = [](const TD& y, const TD& w) { return sum(hadamard(y, w)); };

    struct Case {
        const char* name;
        ScalarProgram fn;
        std::vector<TD> inputs;
    };
    const TD w22 = u({3, 5}), w343 = u({2, 4, 3}), w255 = u({3, 5, 5}), w233 = u({3, 3, 3});
    const TD w31 = u({2, 1, 1}), w344 = u({2, 4, 4}), w556 = u({2, 5, 6}), w3 = u({3, 4, 3});
    std::vector<Case> cases = {
        {"matmul", [&](const std::vector<TD>& in) { return weighted(matmul(in[0], in[1]), w22); }, {u({3, 4}), u({4, 5})}},
        {"transpose", [&](const std::vector<TD>& in) { return weighted(transpose(in[0]), w22); }, {u({5, 3})}},
        {"softmax_row", [&](const std::vector<TD>& in) { return weighted(softmax(in[0], Axis::Row), w22); }, {u({3, 5})}},
        {"softmax_col", [&](const std::vector<TD>& in) { return weighted(softmax(in[0], Axis::Col), w22); }, {u({3, 5})}},
        {"conv2d_same",
         [&](const std::vector<TD>& in) { return weighted(conv2d(in[0], in[1], &in[2]), w255); },
         {u({2, 5, 5}), u({3, 2, 3, 3}), u({3})}},
        {"conv2d_stride_dilation",
         [&](const std::vector<TD>& in) {
             return weighted(conv2d(in[0], in[1], &in[2], Conv2dOptions{2, 2, Padding::Same}), w233);
         },
         {u({2, 6, 6}), u({3, 2, 3, 3}), u({3})}},
        {"conv2d_pointwise", [&](const std::vector<TD>& in) { return weighted(conv2d(in[0], in[1]), w343); },
         {u({3, 4, 3}), u({2, 3, 1, 1})}},
        {"global_avg_pool", [&](const std::vector<TD>& in) { return weighted(global_avg_pool(in[0]), w31); }, {u({2, 3, 4})}},
        {"resize_up", [&](const std::vector<TD>& in) { return weighted(resize_bilinear(in[0], 5, 6), w556); }, {u({2, 3, 2})}},
        {"resize_down", [&](const std::vector<TD>& in) { return weighted(resize_bilinear(in[0], 4, 4), w344); }, {u({2, 7, 5})}},
        {"normalize_l2", [&](const std::vector<TD>& in) { return weighted(normalize(in[0], NormMode::L2Channel), w343); }, {u({2, 4, 3})}},
        {"normalize_pos", [&](const std::vector<TD>& in) { return weighted(normalize(in[0], NormMode::ChannelPos), w343); }, {u({2, 4, 3})}},
        {"add_broadcast", [&](const std::vector<TD>& in) { return weighted(add(in[0], in[1]), w343); }, {u({2, 4, 3}), u({2, 1, 1})}},
        {"sub_broadcast", [&](const std::vector<TD>& in) { return weighted(sub(in[1], in[0]), w343); }, {u({2, 4, 3}), u({1, 4, 3})}},
        {"hadamard_broadcast", [&](const std::vector<TD>& in) { return weighted(hadamard(in[0], in[1]), w343); }, {u({2, 4, 3}), u({2, 1, 1})}},
        {"scale_shift", [&](const std::vector<TD>& in) { return weighted(add_scalar(scale(in[0], 1.7), -0.3), w343); }, {u({2, 4, 3})}},
        {"sigmoid", [&](const std::vector<TD>& in) { return weighted(sigmoid(in[0]), w343); }, {u({2, 4, 3})}},
        {"tanh", [&](const std::vector<TD>& in) { return weighted(hcpn::tanh(in[0]), w343); }, {u({2, 4, 3})}},
        {"relu", [&](const std::vector<TD>& in) { return weighted(relu(in[0]), w343); }, {u({2, 4, 3})}},
        {"max_with_constant", [&](const std::vector<TD>& in) { return weighted(max_with_constant(in[0], w343), w343); }, {u({2, 4, 3})}},
        {"concat_slice",
         [&](const std::vector<TD>& in) { return weighted(slice(concat<double>({in[0], in[1]}), 1, 4), w3); },
         {u({2, 4, 3}), u({2, 4, 3})}},
        {"mean", [&](const std::vector<TD>& in) { return mean(hadamard(in[0], in[0])); }, {u({2, 4, 3})}},
    };
    for (const auto& c : cases) {
        const auto r = grad_check(c.fn, c.inputs);
        EXPECT_LT(r.max_rel_error, 1e-4) << c.name;
    }

    TD pred = rng.uniform_tensor<double>({1, 4, 4}, 0.05, 0.95);
    std::vector<double> g(16);
    for (std::size_t i = 0; i < 16; ++i) g[i] = (i % 3 == 0) ? 1.0 : 0.0;
    const TD target({1, 4, 4}, g);
    const auto bce = grad_check([&](const std::vector<TD>& in) { return binary_cross_entropy(in[0], target); }, {pred});
    EXPECT_LT(bce.max_rel_error, 1e-4);
}

TEST(GradCheck, NonFiniteIntermediateNamesNode) {
    const TD x({2}, {1.0, 2.0});
    try {
        grad_check([](const std::vector<TD>& in) { return sum(scale(in[0], std::numeric_limits<double>::infinity())); },
                   {x});
        FAIL() << "expected CorruptStateError";
    } catch (const CorruptStateError& e) {
        EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos);
    }
}

TEST(GradCheck, FaultInjectionIsDetected) {
    Rng rng(2);
    const TD x = rng.uniform_tensor<double>({3, 3}, -1, 1);
    ScalarProgram fn = [](const std::vector<TD>& in) {
        TapeScope<double> scope(in[0].tape(), "victim");
        return sum(hadamard(in[0], in[0]));
    };
    GradCheckOptions opts;
    EXPECT_LT(grad_check(fn, {x}, opts).max_rel_error, 1e-8);
    opts.fault_scope = "victim";
    EXPECT_GT(grad_check(fn, {x}, opts).max_rel_error, 1e-2);
}

TEST(Tensor, InvariantsAndFiniteness) {
    EXPECT_THROW(TD({2, 3}, std::vector<double>(5)), DimensionError);
    const TD t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.reshaped({3, 2}).numel(), 6u);
    EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
    EXPECT_TRUE(t.all_finite());
    EXPECT_FALSE(TD({2}, {1.0, std::nan("")}).all_finite());
}
