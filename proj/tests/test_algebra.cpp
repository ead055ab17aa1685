#include <nlohmann/json.hpp>

#include "doctest.h"
#include "dflearn/algebra.hpp"
#include "dflearn/linalg.hpp"
#include "dflearn/rng.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace dflearn;
using algebra::AlgebraStructure;

namespace {

AlgebraStructure make(std::vector<std::pair<int, int>> blocks, int n0 = 0) {
    return AlgebraStructure{n0, std::move(blocks)};
}

}  // namespace

TEST_SUITE_BEGIN("algebra");

TEST_CASE("structure bookkeeping") {
    const AlgebraStructure s = make({{1, 2}, {1, 1}, {1, 1}});
    CHECK(s.dim() == 4);
    CHECK(s.block_count() == 3);
    CHECK(s.linear_dimension() == 3);
    CHECK(s.unital());
    CHECK(s.to_string() == "({1,2},{1,1}^2)");
    const AlgebraStructure r = make({{3, 1}}, 2);
    CHECK(r.dim() == 5);
    CHECK_FALSE(r.unital());
    CHECK(r.to_string() == "(n0=2; {3,1})");
    CHECK(make({{1, 1}, {1, 2}}).canonical() == make({{1, 2}, {1, 1}}));
    CHECK_THROWS_AS(make({}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(make({{0, 2}}).validate(), std::invalid_argument);
}

TEST_CASE("structure json round trip") {
    const AlgebraStructure s = make({{2, 1}, {1, 2}});
    const nlohmann::json j = s;
    CHECK(j.at("n0") == 0);
    const AlgebraStructure back = j.get<AlgebraStructure>();
    CHECK(back == s);
}

TEST_CASE("enumeration counts for small dimensions") {
    CHECK(algebra::enumerate_structures(1, false).size() == 1);
    CHECK(algebra::enumerate_structures(2, false).size() == 3);
    CHECK(algebra::enumerate_structures(2, true).size() == 3);
    CHECK(algebra::enumerate_structures(3, false).size() == 7);
    CHECK(algebra::enumerate_structures(3, true).size() == 5);
    CHECK(algebra::enumerate_structures(4, false).size() == 18);
    CHECK(algebra::enumerate_structures(4, true).size() == 11);
}

TEST_CASE("enumeration respects dimension, uniqueness and canonical form") {
    const auto all = algebra::enumerate_structures(4, true);
    for (const auto& s : all) {
        CHECK(s.dim() == 4);
        CHECK(s == s.canonical());
        CHECK(s.unital());
    }
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j) CHECK_FALSE(all[i] == all[j]);
    // every canonical structure appears among the ordered ones
    const auto ordered = algebra::enumerate_structures(4, false);
    for (const auto& s : all) {
        bool found = false;
        for (const auto& o : ordered) found = found || o.canonical() == s;
        CHECK(found);
    }
}

TEST_CASE("enumeration with zero corners") {
    // dimension 3: 7 unital + 3 with n0=1 + 1 with n0=2
    CHECK(algebra::enumerate_structures(3, false, true).size() == 11);
    const auto all = algebra::enumerate_structures(3, true, true);
    for (const auto& s : all) CHECK(s.dim() == 3);
    bool has_restricted = false;
    for (const auto& s : all) has_restricted = has_restricted || (s.n0 == 1 && s.blocks == make({{2, 1}}, 1).blocks);
    CHECK(has_restricted);
}

TEST_CASE("assemble_element builds the expected block matrix") {
    const AlgebraStructure s = make({{2, 2}});
    algebra::AlgebraElement e{algebra::AlgebraBasis::canonical(s), {}};
    Matrix x(2, 2);
    x << Complex(1, 0), Complex(2, 1), Complex(0, -1), Complex(3, 0);
    e.block_matrices.push_back(x);
    const Matrix full = algebra::assemble_element(e);
    CHECK(full.rows() == 4);
    // kron(x, I_2)
    CHECK(full(0, 0) == x(0, 0));
    CHECK(full(1, 1) == x(0, 0));
    CHECK(full(0, 2) == x(0, 1));
    CHECK(full(1, 3) == x(0, 1));
    CHECK(full(0, 1) == Complex(0, 0));

    rng::Engine eng = rng::make_engine(17);
    const Matrix u = rng::haar_unitary(4, eng);
    algebra::AlgebraElement rotated{algebra::AlgebraBasis{s, u}, {x}};
    CHECK(testutil::matrix_rel_err(algebra::assemble_element(rotated), u * full * u.adjoint()) <
          1e-13);
}

TEST_CASE("assembled elements commute exactly when the structure says so") {
    rng::Engine eng = rng::make_engine(23);
    const AlgebraStructure s = make({{1, 2}, {2, 1}});
    const Matrix u = rng::haar_unitary(4, eng);
    const algebra::AlgebraBasis basis{s, u};
    const auto draw = [&]() {
        algebra::AlgebraElement e{basis, {}};
        for (const auto& [nk, mk] : s.blocks)
            e.block_matrices.push_back(rng::gaussian_complex(nk, nk, eng));
        return algebra::assemble_element(e);
    };
    const Matrix a = draw();
    const Matrix b = draw();
    // products stay inside the algebra: the scalar block commutes, the full
    // block generally does not
    const Matrix comm = a * b - b * a;
    CHECK(testutil::max_abs(comm) > 1e-3);  // {2,1} factor is non-abelian
    const AlgebraStructure abelian = make({{1, 2}, {1, 1}, {1, 1}});
    const algebra::AlgebraBasis basis2{abelian, u};
    algebra::AlgebraElement e1{basis2, {}}, e2{basis2, {}};
    for (const auto& [nk, mk] : abelian.blocks) {
        e1.block_matrices.push_back(rng::gaussian_complex(1, 1, eng));
        e2.block_matrices.push_back(rng::gaussian_complex(1, 1, eng));
    }
    CHECK(testutil::max_abs(algebra::assemble_element(e1) * algebra::assemble_element(e2) -
                            algebra::assemble_element(e2) * algebra::assemble_element(e1)) <
          1e-13);
}

TEST_CASE("block projectors are isometries resolving the accessible space") {
    rng::Engine eng = rng::make_engine(31);
    const AlgebraStructure s = make({{2, 1}, {1, 2}}, 1);  // n = 5 with a zero corner
    const Matrix u = rng::haar_unitary(5, eng);
    const algebra::AlgebraBasis basis{s, u};
    const auto ps = algebra::block_projectors(basis);
    REQUIRE(ps.size() == 2);
    Matrix acc = Matrix::Zero(5, 5);
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto [nk, mk] = s.blocks[k];
        CHECK(ps[k].rows() == nk * mk);
        CHECK(testutil::max_abs(ps[k] * ps[k].adjoint() -
                                Matrix::Identity(nk * mk, nk * mk)) < 1e-12);
        for (std::size_t l = k + 1; l < ps.size(); ++l)
            CHECK(testutil::max_abs(ps[k] * ps[l].adjoint()) < 1e-12);
        acc += ps[k].adjoint() * ps[k];
    }
    const Matrix zero_rows = algebra::zero_block_rows(basis);
    CHECK(zero_rows.rows() == 1);
    acc += zero_rows.adjoint() * zero_rows;
    CHECK(testutil::max_abs(acc - Matrix::Identity(5, 5)) < 1e-12);
}

TEST_CASE("projector sandwich reconstructs assembled elements") {
    rng::Engine eng = rng::make_engine(37);
    const AlgebraStructure s = make({{2, 2}, {1, 1}});  // n = 5
    const Matrix u = rng::haar_unitary(5, eng);
    const algebra::AlgebraBasis basis{s, u};
    const auto ps = algebra::block_projectors(basis);
    algebra::AlgebraElement e{basis, {}};
    for (const auto& [nk, mk] : s.blocks)
        e.block_matrices.push_back(rng::gaussian_complex(nk, nk, eng));
    Matrix rebuilt = Matrix::Zero(5, 5);
    for (std::size_t k = 0; k < ps.size(); ++k) {
        const auto [nk, mk] = s.blocks[k];
        rebuilt += ps[k].adjoint() *
                   linalg::kron(e.block_matrices[k], Matrix::Identity(mk, mk)) * ps[k];
    }
    CHECK(testutil::matrix_rel_err(rebuilt, algebra::assemble_element(e)) < 1e-12);
}

TEST_CASE("embedding accepts the two-copy example with the expected witness") {
    const auto w = algebra::is_embedded(make({{2, 2}}), make({{2, 1}, {2, 1}}));
    REQUIRE(w.has_value());
    REQUIRE(w->multiplicities.rows() == 2);
    REQUIRE(w->multiplicities.cols() == 1);
    CHECK(w->multiplicities(0, 0) == 1);
    CHECK(w->multiplicities(1, 0) == 1);
    CHECK_FALSE(algebra::is_embedded(make({{2, 1}, {2, 1}}), make({{2, 2}})).has_value());
}

TEST_CASE("embedding is reflexive and transitive") {
    const auto all = algebra::enumerate_structures(4, true);
    for (const auto& s : all) CHECK(algebra::is_embedded(s, s).has_value());
    for (const auto& a : all)
        for (const auto& b : all)
            for (const auto& c : all) {
                if (!algebra::is_embedded(a, b) || !algebra::is_embedded(b, c)) continue;
                CHECK(algebra::is_embedded(a, c).has_value());
            }
}

TEST_CASE("embedding agrees with the exhaustive oracle on all pairs up to n=4") {
    for (int n = 1; n <= 4; ++n) {
        const auto all = algebra::enumerate_structures(n, true);
        for (const auto& sub : all)
            for (const auto& super : all) {
                const bool got = algebra::is_embedded(sub, super).has_value();
                CHECK(got == oracles::embedding_brute_force(sub, super));
            }
    }
}

TEST_CASE("embedding witnesses satisfy their defining sums") {
    const auto all = algebra::enumerate_structures(4, true);
    for (const auto& sub : all)
        for (const auto& super : all) {
            const auto w = algebra::is_embedded(sub, super);
            if (!w) continue;
            const IntMatrix& a = w->multiplicities;
            for (int k = 0; k < super.block_count(); ++k) {
                int sum = 0;
                for (int l = 0; l < sub.block_count(); ++l) {
                    CHECK(a(k, l) >= 0);
                    sum += a(k, l) * sub.blocks[l].first;
                }
                CHECK(sum == super.blocks[k].first);
            }
            for (int l = 0; l < sub.block_count(); ++l) {
                int sum = 0;
                for (int k = 0; k < super.block_count(); ++k)
                    sum += a(k, l) * super.blocks[k].second;
                CHECK(sum == sub.blocks[l].second);
            }
        }
}

TEST_CASE("embedding validates its inputs") {
    CHECK_THROWS_AS(algebra::is_embedded(make({{1, 2}}), make({{1, 3}})),
                    std::invalid_argument);
    CHECK_THROWS_AS(algebra::is_embedded(make({{2, 1}}, 1), make({{1, 5}})),
                    std::invalid_argument);
}

TEST_CASE("full algebra sits at the top, scalars at the bottom") {
    const auto all = algebra::enumerate_structures(4, true);
    const AlgebraStructure full = make({{4, 1}});
    const AlgebraStructure scalars = make({{1, 4}});
    for (const auto& s : all) {
        CHECK(algebra::is_embedded(s, full).has_value());
        CHECK(algebra::is_embedded(scalars, s).has_value());
    }
}

TEST_CASE("hierarchy dag over the three-structure chain") {
    const std::vector<AlgebraStructure> chain{make({{4, 1}}), make({{2, 2}}), make({{1, 4}})};
    const auto dag = algebra::hierarchy_dag(chain);
    REQUIRE(dag.edges.size() == 2);
    CHECK(dag.edges[0] == std::pair<int, int>(1, 0));  // ({2,2}) into ({4,1})
    CHECK(dag.edges[1] == std::pair<int, int>(2, 1));  // ({1,4}) into ({2,2})
    const auto order = dag.topological_order();
    CHECK(order == std::vector<int>{0, 1, 2});
    const std::string dot = dag.to_dot();
    CHECK(dot.find("({4,1})") != std::string::npos);
    CHECK(dot.find("s0 -> s1") != std::string::npos);
    CHECK(dot.find("s1 -> s2") != std::string::npos);
}

TEST_CASE("hierarchy dag is transitively reduced and respects reachability") {
    const auto all = algebra::enumerate_structures(4, true);
    const auto dag = algebra::hierarchy_dag(all);
    const int count = static_cast<int>(all.size());
    // closure of reduced edges
    std::vector<std::vector<bool>> reach(count, std::vector<bool>(count, false));
    for (const auto& [sub, super] : dag.edges) reach[sub][super] = true;
    for (int k = 0; k < count; ++k)
        for (int i = 0; i < count; ++i)
            if (reach[i][k])
                for (int j = 0; j < count; ++j)
                    if (reach[k][j]) reach[i][j] = true;
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < count; ++j) {
            if (i == j) continue;
            CHECK(reach[i][j] == algebra::is_embedded(all[i], all[j]).has_value());
        }
    // no redundant edge
    for (const auto& [sub, super] : dag.edges)
        for (int k = 0; k < count; ++k) {
            if (k == sub || k == super) continue;
            const bool through = algebra::is_embedded(all[sub], all[k]).has_value() &&
                                 algebra::is_embedded(all[k], all[super]).has_value();
            CHECK_FALSE(through);
        }
    // order endpoints
    const auto order = dag.topological_order();
    CHECK(all[order.front()] == make({{4, 1}}));
    CHECK(all[order.back()] == make({{1, 4}}));
    CHECK_THROWS_AS(algebra::hierarchy_dag({make({{2, 2}}), make({{2, 2}})}),
                    std::invalid_argument);
}

TEST_CASE("intersection dimension of canonical algebras") {
    const auto full = algebra::AlgebraBasis::canonical(make({{3, 1}}));
    const auto diag = algebra::AlgebraBasis::canonical(make({{1, 1}, {1, 1}, {1, 1}}));
    const auto scalars = algebra::AlgebraBasis::canonical(make({{1, 3}}));
    CHECK(algebra::intersection_dimension(full, diag) == 3);
    CHECK(algebra::intersection_dimension(diag, scalars) == 1);
    CHECK(algebra::intersection_dimension(full, full) == 9);
    rng::Engine eng = rng::make_engine(41);
    const algebra::AlgebraBasis rotated{make({{1, 1}, {1, 1}, {1, 1}}),
                                        rng::haar_unitary(3, eng)};
    // a generic rotation leaves only the identity in common
    CHECK(algebra::intersection_dimension(diag, rotated) == 1);
}

TEST_SUITE_END();
