#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "pll/gradcheck.hpp"
#include "pll/nn.hpp"
#include "pll/optim.hpp"
#include "pll/params.hpp"

using namespace pll;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(std::move(shape));
    for (auto& v : t.values) v = u(rng);
    return t;
}

}  // namespace

TEST_SUITE("nn_kernel") {

TEST_CASE("conv1d output length for a 310-feature row") {
    Tensor x({1, 310}, 0.5);
    Tensor k({5, 1, 3}, 0.1);
    Tensor b({5});
    const auto y = nn::conv1d(x, k, b);
    CHECK(y.shape == Shape{5, 308});
}

TEST_CASE("conv1d with a centre delta kernel copies the interior") {
    std::mt19937_64 rng(1);
    const auto x = random_tensor({2, 7}, rng);
    Tensor k({2, 2, 3});
    k[(0 * 2 + 0) * 3 + 1] = 1.0;
    k[(1 * 2 + 1) * 3 + 1] = 1.0;
    const auto y = nn::conv1d(x, k, Tensor({2}));
    REQUIRE(y.shape == Shape{2, 5});
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t t = 0; t < 5; ++t) CHECK(y[c * 5 + t] == x[c * 7 + t + 1]);
    }
}

TEST_CASE("conv1d matches a direct triple loop") {
    std::mt19937_64 rng(2);
    const auto x = random_tensor({2, 6}, rng);
    const auto k = random_tensor({3, 2, 3}, rng);
    const auto b = random_tensor({3}, rng);
    const auto y = nn::conv1d(x, k, b);
    REQUIRE(y.shape == Shape{3, 4});
    for (std::size_t o = 0; o < 3; ++o) {
        for (std::size_t t = 0; t < 4; ++t) {
            double acc = b[o];
            for (std::size_t c = 0; c < 2; ++c) {
                for (std::size_t w = 0; w < 3; ++w) acc += k[(o * 2 + c) * 3 + w] * x[c * 6 + t + w];
            }
            CHECK(y[o * 4 + t] == doctest::Approx(acc).epsilon(1e-14));
        }
    }
}

TEST_CASE("conv1d rejects mismatched shapes") {
    CHECK_THROWS_AS(nn::conv1d(Tensor({2, 6}), Tensor({3, 1, 3}), Tensor({3})), ShapeError);
    CHECK_THROWS_AS(nn::conv1d(Tensor({1, 2}), Tensor({3, 1, 3}), Tensor({3})), ShapeError);
    CHECK_THROWS_AS(nn::conv1d(Tensor({1, 6}), Tensor({3, 1, 3}), Tensor({2})), ShapeError);
}

TEST_CASE("conv1d backward agrees with finite differences") {
    std::mt19937_64 rng(3);
    const auto x = random_tensor({2, 2, 6}, rng);
    auto k = random_tensor({3, 2, 3}, rng);
    const auto b = random_tensor({3}, rng);
    const auto g = random_tensor({2, 3, 4}, rng);
    Tensor kg(k.shape), bg(b.shape);
    nn::conv1d_backward(x, k, g, kg, bg, false);
    auto f = [&](const Tensor& kk) {
        const auto y = nn::conv1d(x, kk, b);
        return std::inner_product(y.values.begin(), y.values.end(), g.values.begin(), 0.0);
    };
    for (std::size_t i = 0; i < k.size(); ++i) {
        auto kp = k, km = k;
        kp[i] += 1e-5;
        km[i] -= 1e-5;
        CHECK(kg[i] == doctest::Approx((f(kp) - f(km)) / 2e-5).epsilon(1e-7));
    }
    // bias gradient = sum of the upstream gradient per output channel
    for (std::size_t o = 0; o < 3; ++o) {
        double s = 0.0;
        for (std::size_t bb = 0; bb < 2; ++bb) {
            for (std::size_t t = 0; t < 4; ++t) s += g[(bb * 3 + o) * 4 + t];
        }
        CHECK(bg[o] == doctest::Approx(s).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm train mode on constant channels gives zeros") {
    Tensor x({3, 2, 4});
    for (std::size_t b = 0; b < 3; ++b) {
        for (std::size_t t = 0; t < 4; ++t) {
            x[(b * 2 + 0) * 4 + t] = 2.5;
            x[(b * 2 + 1) * 4 + t] = -1.0;
        }
    }
    nn::BatchNormCache cache;
    const auto y = nn::batchnorm1d_train(x, Tensor({2}, 1.0), Tensor({2}), cache);
    for (double v : y.values) CHECK(v == 0.0);
}

TEST_CASE("batchnorm train mode standardizes each channel") {
    std::mt19937_64 rng(4);
    const auto x = random_tensor({4, 2, 5}, rng, -3.0, 5.0);
    nn::BatchNormCache cache;
    const auto y = nn::batchnorm1d_train(x, Tensor({2}, 1.0), Tensor({2}), cache);
    for (std::size_t c = 0; c < 2; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t t = 0; t < 5; ++t) m += y[(b * 2 + c) * 5 + t];
        }
        m /= 20.0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t t = 0; t < 5; ++t) v += std::pow(y[(b * 2 + c) * 5 + t] - m, 2);
        }
        v /= 20.0;
        CHECK(std::abs(m) <= 1e-5);
        CHECK(std::abs(v - 1.0) <= 1e-4);
    }
}

TEST_CASE("batchnorm matches explicit statistics, and running stats use the unbiased variance") {
    std::mt19937_64 rng(5);
    const auto x = random_tensor({4, 2, 5}, rng, -2.0, 2.0);
    const Tensor scale({2}, std::vector<double>{1.5, 0.5});
    const Tensor shift({2}, std::vector<double>{0.1, -0.3});
    nn::BatchNormCache cache;
    const auto y = nn::batchnorm1d_train(x, scale, shift, cache);
    Tensor rm({2}), rv({2}, 1.0);
    nn::batchnorm1d_update_running(cache, 20, rm, rv);
    for (std::size_t c = 0; c < 2; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t t = 0; t < 5; ++t) m += x[(b * 2 + c) * 5 + t];
        }
        m /= 20.0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t t = 0; t < 5; ++t) v += std::pow(x[(b * 2 + c) * 5 + t] - m, 2);
        }
        const double biased = v / 20.0, unbiased = v / 19.0;
        for (std::size_t b = 0; b < 4; ++b) {
            for (std::size_t t = 0; t < 5; ++t) {
                const double want = scale[c] * (x[(b * 2 + c) * 5 + t] - m) / std::sqrt(biased + 1e-5) + shift[c];
                CHECK(y[(b * 2 + c) * 5 + t] == doctest::Approx(want).epsilon(1e-12));
            }
        }
        CHECK(rm[c] == doctest::Approx(0.1 * m).epsilon(1e-12));
        CHECK(rv[c] == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm eval before any training step uses mean 0, variance 1") {
    std::mt19937_64 rng(6);
    const auto x = random_tensor({2, 3, 4}, rng);
    nn::BatchNormCache cache;
    const auto y = nn::batchnorm1d_eval(x, Tensor({3}, 1.0), Tensor({3}), Tensor({3}), Tensor({3}, 1.0), cache);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i] / std::sqrt(1.0 + 1e-5)));
}

TEST_CASE("batchnorm train mode rejects a single value per channel") {
    nn::BatchNormCache cache;
    CHECK_THROWS(nn::batchnorm1d_train(Tensor({1, 2, 1}), Tensor({2}, 1.0), Tensor({2}), cache));
}

TEST_CASE("batchnorm backward agrees with finite differences in train mode") {
    std::mt19937_64 rng(7);
    auto x = random_tensor({3, 2, 4}, rng);
    const auto scale = random_tensor({2}, rng, 0.5, 1.5);
    const auto shift = random_tensor({2}, rng);
    const auto g = random_tensor({3, 2, 4}, rng);
    nn::BatchNormCache cache;
    nn::batchnorm1d_train(x, scale, shift, cache);
    Tensor sg({2}), hg({2});
    const auto gx = nn::batchnorm1d_backward(cache, scale, g, sg, hg);
    auto f = [&](const Tensor& xx) {
        nn::BatchNormCache c;
        const auto y = nn::batchnorm1d_train(xx, scale, shift, c);
        return std::inner_product(y.values.begin(), y.values.end(), g.values.begin(), 0.0);
    };
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x, xm = x;
        xp[i] += 1e-5;
        xm[i] -= 1e-5;
        CHECK(gx[i] == doctest::Approx((f(xp) - f(xm)) / 2e-5).epsilon(1e-6));
    }
}

TEST_CASE("leaky relu") {
    const auto y = nn::leaky_relu(Tensor({2}, std::vector<double>{1.0, -1.0}), 0.01);
    CHECK(y[0] == 1.0);
    CHECK(y[1] == doctest::Approx(-0.01).epsilon(1e-15));
    Tensor pos({4}, std::vector<double>{0.0, 0.5, 2.0, 7.0});
    CHECK(nn::leaky_relu(pos) == pos);
    std::mt19937_64 rng(8);
    const auto r = random_tensor({50}, rng);
    const auto ry = nn::leaky_relu(r, 0.2);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(ry[i] == (r[i] >= 0.0 ? r[i] : 0.2 * r[i]));
}

TEST_CASE("dense") {
    Tensor eye({3, 3});
    for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    const Tensor x({3}, std::vector<double>{0.3, -2.0, 5.0});
    CHECK(nn::dense(x, eye, Tensor({3})) == x);
    const Tensor b({2}, std::vector<double>{1.5, -0.5});
    CHECK(nn::dense(x, Tensor({2, 3}), b) == b);

    std::mt19937_64 rng(9);
    const auto w = random_tensor({3, 4}, rng);
    const auto bias = random_tensor({3}, rng);
    const auto in = random_tensor({4}, rng);
    const auto y = nn::dense(in, w, bias);
    for (std::size_t o = 0; o < 3; ++o) {
        double acc = bias[o];
        for (std::size_t i = 0; i < 4; ++i) acc += w[o * 4 + i] * in[i];
        CHECK(y[o] == doctest::Approx(acc).epsilon(1e-14));
    }
    CHECK_THROWS_AS(nn::dense(Tensor({5}), w, bias), ShapeError);
}

TEST_CASE("single dense layer with cross-entropy: gradient is (softmax - onehot) outer input") {
    std::mt19937_64 rng(10);
    const auto w = random_tensor({5, 4}, rng);
    const auto x = random_tensor({1, 4}, rng);
    const auto z = nn::dense(x, w, Tensor({5}));
    const auto p = nn::softmax(z.row(0));
    const std::size_t y = 2;
    Tensor gz({1, 5});
    for (std::size_t s = 0; s < 5; ++s) gz[s] = p[s] - (s == y ? 1.0 : 0.0);
    Tensor wg(w.shape), bg({5});
    nn::dense_backward(x, w, gz, wg, bg, false);
    for (std::size_t o = 0; o < 5; ++o) {
        for (std::size_t i = 0; i < 4; ++i) CHECK(wg[o * 4 + i] == doctest::Approx(gz[o] * x[i]).epsilon(1e-14));
    }
}

TEST_CASE("dropout") {
    std::mt19937_64 rng(11);
    const auto x = random_tensor({1000}, rng);
    Tensor mask;
    CHECK(nn::dropout(x, 0.5, false, &rng, mask) == x);
    CHECK(nn::dropout(x, 0.0, true, &rng, mask) == x);
    const Tensor ones({100000}, 1.0);
    const auto y = nn::dropout(ones, 0.5, true, &rng, mask);
    std::size_t kept = 0;
    for (double v : y.values) {
        if (v != 0.0) {
            ++kept;
            CHECK(v == 2.0);
        }
    }
    CHECK(std::abs(static_cast<double>(kept) / 1e5 - 0.5) <= 0.01);
    CHECK_THROWS(nn::dropout(x, 1.0, true, &rng, mask));
}

TEST_CASE("softmax, sigmoid, clamp") {
    const std::vector<double> zeros(5, 0.0);
    for (double p : nn::softmax(zeros)) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(nn::sigmoid(0.0) == 0.5);
    const std::vector<double> z = {2, 0, 0, 0, 0};
    const auto p = nn::softmax(z);
    const double denom = std::exp(2.0) + 4.0;
    CHECK(p[0] == doctest::Approx(std::exp(2.0) / denom).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(1.0 / denom).epsilon(1e-15));
    CHECK(nn::clamp(3.0, 0.0, 1.0) == 1.0);
    CHECK(nn::clamp(-3.0, 0.0, 1.0) == 0.0);
    CHECK(nn::clamp(0.25, 0.0, 1.0) == 0.25);
}

TEST_CASE("softmax sums to one and ignores a constant shift") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto z = random_tensor({7}, rng, -30.0, 30.0);
        std::vector<double> shifted(z.values);
        for (auto& v : shifted) v += 123.456;
        const auto p = nn::softmax(z.values);
        const auto q = nn::softmax(shifted);
        CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
        for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-9);
    }
    // large logits stay finite
    const auto big = nn::softmax(std::vector<double>{1000.0, 0.0});
    CHECK(big[0] == 1.0);
    CHECK(std::isfinite(big[1]));
}

TEST_CASE("clamped log") {
    CHECK(nn::clamped_log(0.0) == doctest::Approx(std::log(1e-7)));
    CHECK(nn::clamped_log(0.5) == std::log(0.5));
    CHECK(nn::clamped_log_derivative(0.5) == 2.0);
    CHECK(nn::clamped_log_derivative(1e-9) == 0.0);
}

TEST_CASE("l2 normalization") {
    std::mt19937_64 rng(13);
    const auto x = random_tensor({4, 6}, rng);
    const auto y = nn::l2_normalize_rows(x);
    for (std::size_t b = 0; b < 4; ++b) {
        double n = 0.0;
        for (double v : x.row(b)) n += v * v;
        n = std::sqrt(n);
        for (std::size_t i = 0; i < 6; ++i) CHECK(y[b * 6 + i] == doctest::Approx(x[b * 6 + i] / n).epsilon(1e-14));
    }
    const auto z = nn::l2_normalize_rows(Tensor({1, 4}));
    double n = 0.0;
    for (double v : z.values) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-6);
}

TEST_CASE("sgd: zero gradient, zero decay, zero velocity leaves parameters unchanged") {
    ParameterSet p;
    p.add("w", Tensor({3}, std::vector<double>{1.0, -2.0, 0.5}));
    const auto before = p;
    SgdConfig c;
    c.weight_decay = 0.0;
    SgdOptimizer opt(c, p);
    GradientSet g(p);
    opt.step(p, g);
    CHECK(p == before);
}

TEST_CASE("sgd: one plain step") {
    ParameterSet p;
    p.add("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
    SgdConfig c;
    c.momentum = 0.0;
    c.weight_decay = 0.0;
    c.learning_rate = 0.1;
    c.schedule = Schedule::none;
    SgdOptimizer opt(c, p);
    GradientSet g(p);
    g[0] = Tensor({2}, std::vector<double>{0.5, 3.0});
    opt.step(p, g);
    CHECK(p[0][0] == 1.0 - 0.1 * 0.5);
    CHECK(p[0][1] == -2.0 - 0.1 * 3.0);
}

TEST_CASE("sgd: three momentum steps on a 1-D quadratic follow the scalar recurrence") {
    ParameterSet p;
    p.add("w", Tensor({1}, 2.0));
    SgdConfig c;
    c.learning_rate = 0.1;
    c.momentum = 0.9;
    c.weight_decay = 1e-4;
    c.schedule = Schedule::none;
    SgdOptimizer opt(c, p);
    double theta = 2.0, v = 0.0;
    for (int step = 0; step < 3; ++step) {
        GradientSet g(p);
        g[0][0] = 2.0 * p[0][0];  // d/dθ θ²
        opt.step(p, g);
        v = 0.9 * v + (2.0 * theta + 1e-4 * theta);
        theta -= 0.1 * v;
        CHECK(p[0][0] == doctest::Approx(theta).epsilon(1e-15));
    }
}

TEST_CASE("cosine schedule") {
    ParameterSet p;
    p.add("w", Tensor({1}));
    SgdConfig c;
    c.total_epochs = 30;
    SgdOptimizer opt(c, p);
    opt.set_epoch(0);
    CHECK(opt.current_lr() == doctest::Approx(0.01));
    opt.set_epoch(15);
    CHECK(opt.current_lr() == doctest::Approx(0.005));
    c.schedule = Schedule::none;
    SgdOptimizer flat(c, p);
    flat.set_epoch(20);
    CHECK(flat.current_lr() == 0.01);
}

TEST_CASE("gradcheck on linear and quadratic losses") {
    ParameterSet p;
    std::mt19937_64 rng(14);
    p.add("a", random_tensor({6}, rng));
    p.add("b", random_tensor({2, 3}, rng));
    const Objective linear = [](const ParameterSet& ps, bool grad) {
        LossEval ev;
        for (std::size_t e = 0; e < ps.size(); ++e) {
            for (double v : ps[e].values) ev.value += v;
        }
        if (grad) {
            ev.grads = GradientSet(ps);
            for (std::size_t e = 0; e < ps.size(); ++e) ev.grads[e].fill(1.0);
        }
        return ev;
    };
    CHECK(gradcheck(linear, p).max_rel_error <= 1e-10);
    const Objective quad = [](const ParameterSet& ps, bool grad) {
        LossEval ev;
        if (grad) ev.grads = GradientSet(ps);
        for (std::size_t e = 0; e < ps.size(); ++e) {
            for (std::size_t j = 0; j < ps[e].size(); ++j) {
                ev.value += ps[e][j] * ps[e][j];
                if (grad) ev.grads[e][j] = 2.0 * ps[e][j];
            }
        }
        return ev;
    };
    const auto before = p;
    const auto rep = gradcheck(quad, p);
    CHECK(rep.max_rel_error <= 1e-7);
    CHECK(rep.coords_checked == 12);
    CHECK(p == before);
}

TEST_CASE("gradcheck shrinks the step when a probe straddles a kink") {
    // leaky relu of one parameter sitting 3e-5 from its kink: a 1e-4 central difference
    // mixes both slopes, (3e-5 + 1e-4 + 0.01 (1e-4 - 3e-5)) / 2e-4 = 0.6535
    ParameterSet p;
    p.add("a", Tensor({1}, 3e-5));
    auto make = [](bool track) {
        return Objective([track](const ParameterSet& ps, bool grad) {
            const double a = ps[0][0];
            LossEval ev;
            ev.value = a > 0.0 ? a : 0.01 * a;
            if (track) ev.kink_signature = a > 0.0 ? 1 : 2;
            if (grad) {
                ev.grads = GradientSet(ps);
                ev.grads[0][0] = a > 0.0 ? 1.0 : 0.01;
            }
            return ev;
        });
    };
    const auto untracked = gradcheck(make(false), p);
    CHECK(untracked.worst_numeric == doctest::Approx(0.6535).epsilon(1e-9));
    CHECK_FALSE(untracked.passed(1e-4));
    CHECK(untracked.coords_refined == 0);
    const auto tracked = gradcheck(make(true), p);
    CHECK(tracked.coords_refined == 1);
    CHECK(tracked.coords_on_kink == 0);
    CHECK(tracked.passed(1e-10));
    // exactly on the kink no step helps; the coordinate is reported and still scored
    p[0][0] = 0.0;
    const auto on = gradcheck(make(true), p);
    CHECK(on.coords_on_kink == 1);
    CHECK_FALSE(on.passed(1e-4));
}

TEST_CASE("gradcheck flags a non-deterministic loss") {
    ParameterSet p;
    p.add("a", Tensor({2}, 1.0));
    int calls = 0;
    const Objective noisy = [&calls](const ParameterSet& ps, bool grad) {
        LossEval ev;
        ev.value = ps[0][0] + 1e-3 * (calls++);
        if (grad) ev.grads = GradientSet(ps);
        return ev;
    };
    const auto rep = gradcheck(noisy, p);
    CHECK_FALSE(rep.deterministic);
    CHECK_FALSE(rep.passed(1e-4));
}

TEST_CASE("gradcheck catches a wrong gradient") {
    ParameterSet p;
    p.add("a", Tensor({3}, 0.7));
    const Objective wrong = [](const ParameterSet& ps, bool grad) {
        LossEval ev;
        for (double v : ps[0].values) ev.value += v * v;
        if (grad) {
            ev.grads = GradientSet(ps);
            ev.grads[0].fill(1.0);  // should be 2θ = 1.4
        }
        return ev;
    };
    CHECK(gradcheck(wrong, p).max_rel_error > 0.1);
}

}  // TEST_SUITE
