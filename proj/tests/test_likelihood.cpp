#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dflearn/likelihood.hpp"
#include "dflearn/physmodels.hpp"
#include "testutil.hpp"

using namespace dflearn;
using namespace testutil;
using algebra::AlgebraStructure;
using likelihood::ParameterLayout;
using likelihood::ParameterVector;

namespace {

generator::GkslModel sample_model(const AlgebraStructure& s, int lindblads, std::uint64_t seed,
                                  double scale = 0.4) {
    auto eng = rng::make_engine(seed);
    return physmodels::random_structured_model(s, lindblads, scale, eng);
}

dynamics::Dataset sample_data(const generator::GkslModel& m, int chains, int length,
                              double tau, std::uint64_t seed) {
    return dynamics::generate_dataset(m, generator::model_basis(m), chains, length, tau, seed);
}

double central_difference(const ParameterVector& params, const dynamics::Dataset& data,
                          int index, double h) {
    ParameterVector plus = params, minus = params;
    plus.values[index] += h;
    minus.values[index] -= h;
    return (likelihood::batch_log_likelihood(plus, data) -
            likelihood::batch_log_likelihood(minus, data)) /
           (2 * h);
}

}  // namespace

TEST_SUITE_BEGIN("likelihood");

TEST_CASE("layout sizes add up and pack unpack is the identity") {
    const AlgebraStructure s{0, {{1, 2}, {1, 1}}};
    ParameterLayout layout{s, 2};
    layout.validate();
    CHECK(layout.generator_size() == 9);           // diagonal 3 plus 3 off pairs
    CHECK(layout.beta_size() == 2 * 2 * (4 + 1));  // two lindblads, blocks 2x2 and 1x1
    CHECK(layout.kappa_size() == 2);
    CHECK(layout.mu_size() == 3);
    CHECK(layout.total_size() == 9 + 20 + 2 + 3);

    const auto m = sample_model(s, 2, 60);
    const auto packed = likelihood::pack(m);
    packed.validate();
    CHECK(packed.layout.structure == s);
    CHECK(packed.values.size() == layout.total_size());
    const auto back = likelihood::unpack(packed);
    CHECK(max_abs(Matrix(back.generator - m.generator)) < 1e-14);
    for (size_t j = 0; j < m.betas.size(); ++j)
        for (size_t k = 0; k < m.betas[j].size(); ++k)
            CHECK(max_abs(Matrix(back.betas[j][k] - m.betas[j][k])) < 1e-14);
    for (size_t k = 0; k < m.kappas.size(); ++k)
        CHECK((back.kappas[k] - m.kappas[k]).cwiseAbs().maxCoeff() < 1e-14);
    for (size_t k = 0; k < m.mus.size(); ++k)
        CHECK((back.mus[k] - m.mus[k]).cwiseAbs().maxCoeff() < 1e-14);

    // Unpacking is exactly inverted by packing on the flat side as well.
    const auto repacked = likelihood::pack(back);
    CHECK((repacked.values - packed.values).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("parameter validation flags size mismatches") {
    const AlgebraStructure s{0, {{2, 1}}};
    ParameterVector p{ParameterLayout{s, 1}, RealVector::Zero(3)};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    CHECK_THROWS_AS((ParameterLayout{s, 0}.validate()), std::invalid_argument);
}

TEST_CASE("log likelihood matches the sequence probability") {
    const AlgebraStructure s{0, {{1, 2}, {1, 1}}};
    const auto truth = sample_model(s, 2, 61);
    const auto data = sample_data(truth, 5, 6, 0.2, 62);
    const auto params = likelihood::pack(truth);
    const auto p = generator::make_propagator(truth, data.tau);
    double mean = 0.0;
    for (const auto& chain : data.chains) {
        const auto value = likelihood::log_likelihood(params, chain, data.instruments, data.tau);
        CHECK(value.step_terms.size() == static_cast<size_t>(chain.length()));
        double sum = 0.0;
        for (double t : value.step_terms) sum += t;
        CHECK(rel_err(value.log_probability, sum) < 1e-12);
        CHECK(rel_err(value.per_step, value.log_probability / chain.length()) < 1e-12);
        // Dual route: the recursion must agree with the direct record
        // probability whenever no step is clamped.
        REQUIRE(value.clamped_steps == 0);
        const double q = dynamics::sequence_probability(chain, data.instruments, p);
        CHECK(rel_err(value.log_probability, std::log(q)) < 1e-10);
        mean += value.per_step;
    }
    mean /= data.size();
    CHECK(rel_err(likelihood::batch_log_likelihood(params, data), mean) < 1e-12);

    // Batch selection averages only the requested chains.
    const double sub = likelihood::batch_log_likelihood(params, data, {0, 2});
    const auto v0 = likelihood::log_likelihood(params, data.chains[0], data.instruments, data.tau);
    const auto v2 = likelihood::log_likelihood(params, data.chains[2], data.instruments, data.tau);
    CHECK(rel_err(sub, 0.5 * (v0.per_step + v2.per_step)) < 1e-12);
}

TEST_CASE("impossible outcomes clamp to the floor instead of diverging") {
    // Identity dynamics on one level, record claims the other level.
    const AlgebraStructure s{0, {{2, 1}}};
    generator::GkslModel m;
    m.structure = s;
    m.generator = Matrix::Zero(2, 2);
    m.betas = {{Matrix::Zero(1, 1)}};
    m.kappas = {RealVector::Zero(2)};
    m.mus = {RealVector::Zero(1)};
    dynamics::Instrument inst;
    Matrix p0 = Matrix::Zero(2, 2);
    p0(0, 0) = 1.0;
    Matrix p1 = Matrix::Zero(2, 2);
    p1(1, 1) = 1.0;
    inst.projectors = {p0, p1};
    Matrix ground = Matrix::Zero(2, 2);
    ground(0, 0) = 1.0;
    dynamics::MeasurementChain chain{{0, 0}, {1, 0}, dynamics::InitialState::of(ground)};
    const auto value = likelihood::log_likelihood(likelihood::pack(m), chain, {inst}, 0.3);
    // The dead branch zeroes the conditioned state, so the second step is
    // clamped as well.
    CHECK(value.clamped_steps == 2);
    CHECK(std::isfinite(value.log_probability));
    CHECK(value.step_terms[0] == doctest::Approx(std::log(kProbabilityFloor)));
    CHECK(value.step_terms[1] == doctest::Approx(std::log(kProbabilityFloor)));
}

TEST_CASE("analytic gradient agrees with central differences") {
    const std::vector<AlgebraStructure> structures = {
        AlgebraStructure{0, {{1, 2}}},
        AlgebraStructure{0, {{2, 2}}},
        AlgebraStructure{0, {{1, 2}, {1, 1}, {1, 1}}},
    };
    int idx = 0;
    for (const auto& s : structures) {
        CAPTURE(s.to_string());
        const auto truth = sample_model(s, 2, 63 + idx);
        const auto data = sample_data(truth, 3, 5, 0.15, 70 + idx);
        // Evaluate away from the generating parameters.
        const auto probe = sample_model(s, 2, 80 + idx, 0.3);
        ++idx;
        const auto params = likelihood::pack(probe);
        const auto result = likelihood::gradient(params, data);
        CHECK(rel_err(result.value, likelihood::batch_log_likelihood(params, data)) < 1e-12);
        REQUIRE(result.gradient.size() == params.values.size());
        const double h = 1e-5;
        const double scale = std::max(1.0, result.gradient.cwiseAbs().maxCoeff());
        for (int i = 0; i < result.gradient.size(); ++i) {
            const double fd = central_difference(params, data, i, h);
            CHECK(std::abs(result.gradient[i] - fd) / scale < 1e-4);
        }
    }
}

TEST_CASE("gradient at the generating model is small on large batches") {
    // Sanity: near the maximum of the expected likelihood the empirical
    // gradient shrinks with sample size; just verify it is bounded and finite.
    const AlgebraStructure s{0, {{1, 2}, {1, 1}}};
    const auto truth = sample_model(s, 2, 90);
    const auto data = sample_data(truth, 20, 10, 0.2, 91);
    const auto result = likelihood::gradient(likelihood::pack(truth), data);
    CHECK(result.gradient.allFinite());
    CHECK(result.gradient.cwiseAbs().maxCoeff() < 5.0);
}

TEST_CASE("clamped steps propagate a zero cotangent") {
    // The floor freezes the step term, so the derivative through that branch
    // must vanish; compare against finite differences on the clamped chain.
    const AlgebraStructure s{0, {{2, 1}}};
    const auto probe = sample_model(s, 1, 92, 0.2);
    auto data = sample_data(probe, 2, 4, 0.2, 93);
    // Rewrite one record so that its first step is impossible under identity
    // projectors of the accessible basis; easier: evaluate a parameter point
    // whose dynamics make some recorded outcome extremely unlikely is hard to
    // force deterministically, so instead check consistency on the clamped
    // chain built by hand.
    generator::GkslModel m;
    m.structure = s;
    m.generator = Matrix::Zero(2, 2);
    m.betas = {{Matrix::Constant(1, 1, Complex(0.2, 0.0))}};
    m.kappas = {(RealVector(2) << 0.4, -0.1).finished()};
    m.mus = {RealVector::Zero(1)};
    dynamics::Instrument inst;
    Matrix p0 = Matrix::Zero(2, 2);
    p0(0, 0) = 1.0;
    Matrix p1 = Matrix::Zero(2, 2);
    p1(1, 1) = 1.0;
    inst.projectors = {p0, p1};
    dynamics::Dataset clamped;
    clamped.n = 2;
    clamped.tau = 0.3;
    clamped.accessible_structure = s;
    clamped.accessible_unitary = Matrix::Identity(2, 2);
    clamped.instruments = {inst};
    Matrix ground = Matrix::Zero(2, 2);
    ground(0, 0) = 1.0;
    clamped.chains = {dynamics::MeasurementChain{{0, 0, 0}, {0, 1, 0},
                                                 dynamics::InitialState::of(ground)}};
    const auto params = likelihood::pack(m);
    const auto result = likelihood::gradient(params, clamped);
    CHECK(result.clamped_steps > 0);
    CHECK(result.gradient.allFinite());
    const double h = 1e-5;
    for (int i = 0; i < result.gradient.size(); ++i) {
        const double fd = central_difference(params, clamped, i, h);
        CHECK(std::abs(result.gradient[i] - fd) < 1e-4);
    }
}

TEST_SUITE_END();
