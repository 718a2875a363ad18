#include <smt/loss.hpp>

#include <gtest/gtest.h>

#include <random>

using smt::ModelParams;

namespace {

double total_loss(const smt::Instance& inst, const std::vector<double>& s) {
    // L = n eps evaluated without the sphere constraint (the forms are polynomials)
    return inst.n * smt::evaluate(inst, s).eps;
}

}  // namespace

TEST(Loss, NoiselessAtSignal) {
    for (auto prm : {ModelParams{3, 1.0, 0.5, 0.0}, ModelParams{4, 0.3, 1.7, 0.0}}) {
        smt::GenerateOptions opt;
        opt.noiseless = true;
        const auto inst = smt::generate_instance(prm, 50, 2, opt);
        smt::StateVector s{inst.signal, {}};
        const auto e = smt::loss(inst, s);
        EXPECT_NEAR(e.eps, -1.0 / (prm.p * prm.delta_p) - 1.0 / (2 * prm.delta_2), 1e-12);
        EXPECT_DOUBLE_EQ(e.eps, e.eps_p + e.eps_2);
    }
}

TEST(Loss, NoiselessOrthogonal) {
    smt::GenerateOptions opt;
    opt.noiseless = true;
    const auto inst = smt::generate_instance({3, 1.0, 0.5, 0.0}, 40, 2, opt);
    auto v = smt::StateVector::random(40, 5).sigma;
    const double c = smt::detail::dot(v, inst.signal) / 40.0;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * inst.signal[i];
    const auto s = smt::StateVector::from(v);
    const auto e = smt::loss(inst, s);
    EXPECT_NEAR(e.eps, 0.0, 1e-14);
}

TEST(Loss, DimensionMismatch) {
    const auto inst = smt::generate_instance({3, 1.0, 0.5, 0.0}, 30, 2, false);
    smt::StateVector s = smt::StateVector::random(31, 1);
    EXPECT_THROW(smt::loss(inst, s), std::invalid_argument);
    EXPECT_THROW(smt::gradient(inst, s), std::invalid_argument);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
    for (bool diluted : {false, true}) {
        const auto inst = smt::generate_instance({3, 1.0, 0.5, 0.0}, 80, 8, diluted);
        const auto s = smt::StateVector::random(80, 3);
        const auto g = smt::gradient(inst, s);
        std::mt19937_64 rng(1);
        std::uniform_int_distribution<int> pick(0, 79);
        const double h = 1e-5;
        for (int k = 0; k < 20; ++k) {
            const int i = pick(rng);
            auto plus = s.sigma, minus = s.sigma;
            plus[i] += h;
            minus[i] -= h;
            const double fd = (total_loss(inst, plus) - total_loss(inst, minus)) / (2 * h);
            EXPECT_NEAR(g.grad[i], fd, 1e-6) << "coordinate " << i;
        }
    }
}

TEST(Loss, GradientGenericArity) {
    const auto inst = smt::generate_instance({4, 0.8, 0.6, 0.0}, 24, 8, false);
    const auto s = smt::StateVector::random(24, 3);
    const auto g = smt::gradient(inst, s);
    const double h = 1e-5;
    for (int i = 0; i < 24; i += 5) {
        auto plus = s.sigma, minus = s.sigma;
        plus[i] += h;
        minus[i] -= h;
        EXPECT_NEAR(g.grad[i], (total_loss(inst, plus) - total_loss(inst, minus)) / (2 * h), 1e-6);
    }
}

TEST(Loss, HomogeneityIdentity) {
    for (int seed = 0; seed < 10; ++seed) {
        const ModelParams prm{3 + seed % 2, 0.5 + 0.3 * seed, 0.2 + 0.1 * seed, 0.0};
        const auto inst = smt::generate_instance(prm, 40, seed, false);
        const auto s = smt::StateVector::random(40, 100 + seed);
        const auto g = smt::gradient(inst, s);
        const auto& o = g.observables;
        EXPECT_NEAR(g.mu + prm.p * o.eps_p + 2 * o.eps_2, 0.0, 1e-10);
        // projected update is tangent
        double t = 0;
        for (std::size_t i = 0; i < s.sigma.size(); ++i) t += (g.grad[i] + g.mu * s.sigma[i]) * s.sigma[i];
        EXPECT_NEAR(t, 0.0, 1e-10);
    }
}

TEST(Loss, ReproducibleIndependentOfThreads) {
    const auto inst = smt::generate_instance({3, 1.0, 0.5, 0.0}, 300, 4, true);
    const auto s = smt::StateVector::random(300, 5);
    smt::EvalOptions one{1, true}, four{4, true}, fast{3, false};
    const auto a = smt::gradient(inst, s, one);
    const auto b = smt::gradient(inst, s, four);
    const auto c = smt::gradient(inst, s, fast);
    EXPECT_EQ(a.grad, b.grad);
    EXPECT_EQ(a.observables.eps, b.observables.eps);
    for (std::size_t i = 0; i < a.grad.size(); ++i) EXPECT_NEAR(a.grad[i], c.grad[i], 1e-10);
    EXPECT_NEAR(a.observables.eps, c.observables.eps, 1e-10);
}

TEST(Loss, EvaluateManyMatchesSingle) {
    const auto inst = smt::generate_instance({3, 1.0, 0.5, 0.0}, 200, 4, true);
    const std::vector<ModelParams> ps{{3, 1.0, 0.5, 0.0}, {3, 1.0, 1.0 / 2.7, 0.0}, {3, 2.0, 0.8, 0.0}};
    std::vector<std::vector<double>> xs, gs(3, std::vector<double>(200));
    for (int q = 0; q < 3; ++q) xs.push_back(smt::StateVector::random(200, 10 + q).sigma);
    std::vector<const double*> xp{xs[0].data(), xs[1].data(), xs[2].data()};
    std::vector<double*> gp{gs[0].data(), gs[1].data(), gs[2].data()};
    std::vector<smt::Observables> out(3);
    smt::evaluate_many(inst, ps, xp, gp, out);
    for (int q = 0; q < 3; ++q) {
        // reference: an instance whose scales were generated at ps[q]
        const auto ref = smt::generate_instance(ps[q], 200, 4, true);
        std::vector<double> g(200);
        const auto o = smt::evaluate(ref, xs[q], g);
        EXPECT_NEAR(out[q].eps, o.eps, 1e-12);
        EXPECT_NEAR(out[q].mu, o.mu, 1e-12);
        for (int i = 0; i < 200; ++i) EXPECT_NEAR(gs[q][i], g[i], 1e-12);
    }
}

TEST(Loss, HessianVectorMatchesGradientDifferences) {
    const auto inst = smt::generate_instance({3, 1.0, 0.5, 0.0}, 60, 4, false);
    const auto s = smt::StateVector::random(60, 5).sigma;
    const auto v = smt::StateVector::random(60, 6).sigma;
    const auto hv = smt::hessian_vector(inst, s, v);
    const double h = 1e-6;
    std::vector<double> gp(60), gm(60), sp(s), sm(s);
    for (int i = 0; i < 60; ++i) {
        sp[i] += h * v[i];
        sm[i] -= h * v[i];
    }
    smt::evaluate(inst, sp, gp);
    smt::evaluate(inst, sm, gm);
    for (int i = 0; i < 60; ++i) EXPECT_NEAR(hv[i], (gp[i] - gm[i]) / (2 * h), 1e-6);
}

TEST(StateVector, RenormalizeContract) {
    auto s = smt::StateVector::from(std::vector<double>(1000, 3.0));
    EXPECT_NEAR(s.squared_norm(), 1000.0, 1e-12 * 1000);
    EXPECT_THROW(smt::StateVector::from(std::vector<double>(5, 0.0)), smt::NumericalError);
}
