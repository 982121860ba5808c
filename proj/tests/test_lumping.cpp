#include <gtest/gtest.h>

#include "support.hpp"

using namespace lumpbound;
using namespace testing_support;

namespace {

std::vector<double> vec(const StateFunction& f) { return {f.values().begin(), f.values().end()}; }

std::vector<std::vector<std::size_t>> blocks_of(const LumpingMap& l) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < l.coarse_size(); ++b) {
        const auto blk = l.block(b);
        out.emplace_back(blk.begin(), blk.end());
    }
    return out;
}

}  // namespace

TEST(BuildLumping, FromMapping) {
    const auto fine = StateSpace::make({"a", "b", "c"});
    const auto l = build_lumping(std::map<std::string, std::string>{{"a", "A"}, {"b", "A"}, {"c", "B"}}, fine);
    EXPECT_EQ(l.coarse()->labels(), (std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(blocks_of(l), (std::vector<std::vector<std::size_t>>{{0, 1}, {2}}));
}

TEST(BuildLumping, FirstAppearanceOrder) {
    const auto fine = StateSpace::numbered(4);
    const auto l = build_lumping({"Z", "Y", "Z", "X"}, fine);
    EXPECT_EQ(l.coarse()->labels(), (std::vector<std::string>{"Z", "Y", "X"}));
    EXPECT_EQ(l(3), 2u);
}

TEST(BuildLumping, IdentityAndSingleBlockWarn) {
    const auto fine = StateSpace::make({"a", "b"});
    std::vector<std::string> warnings;
    const auto old = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    const auto id = build_lumping(std::vector<std::string>{"a", "b"}, fine);
    EXPECT_EQ(blocks_of(id), (std::vector<std::vector<std::size_t>>{{0}, {1}}));
    EXPECT_TRUE(id.is_identity());
    const auto one = build_lumping(std::vector<std::string>{"all", "all"}, fine);
    EXPECT_EQ(one.coarse_size(), 1u);
    EXPECT_EQ(blocks_of(one), (std::vector<std::vector<std::size_t>>{{0, 1}}));
    set_warning_sink(old);
    EXPECT_EQ(warnings.size(), 2u);
}

TEST(BuildLumping, Errors) {
    const auto fine = StateSpace::make({"a", "b"});
    try {
        (void)build_lumping(std::map<std::string, std::string>{{"a", "A"}}, fine);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingAssignment);
        EXPECT_NE(std::string(e.what()).find('b'), std::string::npos);
    }
    EXPECT_THROW((void)build_lumping(std::vector<std::string>{"A"}, fine), Error);
}

TEST(LumpingMap, RejectsNonSurjectiveAssignment) {
    const auto fine = StateSpace::numbered(3);
    const auto coarse = StateSpace::numbered(3, "B");
    try {
        LumpingMap(fine, coarse, {0, 0, 1});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidArgument);
        EXPECT_EQ(e.state(), 2u);
    }
}

TEST(TryLumpFunction, Examples) {
    const auto fine = StateSpace::numbered(3);
    const auto l = build_lumping({"A", "A", "B"}, fine);
    const auto f = try_lump_function(StateFunction(fine, {1, 1, 5}), l);
    ASSERT_TRUE(f);
    EXPECT_EQ(vec(*f), (std::vector<double>{1, 5}));
    EXPECT_FALSE(try_lump_function(StateFunction(fine, {1, 2, 5}), l));
    EXPECT_TRUE(try_lump_function(StateFunction(fine, {1, 1 + 1e-13, 5}), l, 1e-12));

    QuietWarnings quiet;
    const auto id = LumpingMap::identity(fine);
    const auto g = try_lump_function(StateFunction(fine, {3, -1, 2}), id);
    ASSERT_TRUE(g);
    EXPECT_EQ(vec(*g), (std::vector<double>{3, -1, 2}));
}

TEST(LumpFunctionBounds, Examples) {
    const auto fine = StateSpace::numbered(3);
    const auto l = build_lumping({"A", "A", "B"}, fine);
    const auto p = lump_function_bounds(StateFunction(fine, {1, 2, 5}), l);
    EXPECT_EQ(vec(p.lower), (std::vector<double>{1, 5}));
    EXPECT_EQ(vec(p.upper), (std::vector<double>{2, 5}));
    EXPECT_FALSE(p.lumpable());

    const auto q = lump_function_bounds(StateFunction(fine, {1, 1, 5}), l);
    ASSERT_TRUE(q.lumpable());
    EXPECT_EQ(vec(q.lower), (std::vector<double>{1, 5}));
    EXPECT_EQ(vec(q.upper), (std::vector<double>{1, 5}));
    EXPECT_EQ(vec(*q.exact), (std::vector<double>{1, 5}));

    const auto fine4 = StateSpace::numbered(4);
    const auto l4 = build_lumping({"A", "A", "B", "B"}, fine4);
    const auto r = lump_function_bounds(StateFunction(fine4, {-3, 4, 0, 0}), l4);
    EXPECT_EQ(vec(r.lower), (std::vector<double>{-3, 0}));
    EXPECT_EQ(vec(r.upper), (std::vector<double>{4, 0}));
}

TEST(LumpDistribution, Examples) {
    const auto fine = StateSpace::numbered(3);
    const auto l = build_lumping({"A", "A", "B"}, fine);
    const auto d = lump_distribution(Distribution(fine, {0.2, 0.3, 0.5}), l);
    EXPECT_NEAR(d[0], 0.5, 1e-16);
    EXPECT_NEAR(d[1], 0.5, 1e-16);

    QuietWarnings quiet;
    const Distribution pi(fine, {0.2, 0.3, 0.5});
    const auto same = lump_distribution(pi, LumpingMap::identity(fine));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(same[i], pi[i]);

    const auto fine6 = StateSpace::numbered(6);
    const auto l6 = build_lumping({"A", "B", "B", "A", "B", "B"}, fine6);
    const auto u = lump_distribution(Distribution::uniform(fine6), l6);
    EXPECT_NEAR(u[0], 1.0 / 3.0, 1e-15);
    EXPECT_NEAR(u[1], 2.0 / 3.0, 1e-15);
}

TEST(LumpingProperties, BoundsSandwichFine) {
    Gen gen(21);
    for (int i = 0; i < 200; ++i) {
        const auto m = gen.model();
        const StateFunction f(m.space(), gen.values(m.space()->size(), -5, 5));
        const auto p = lump_function_bounds(f, m.lumping);
        for (std::size_t x = 0; x < f.size(); ++x) {
            EXPECT_LE(p.lower[m.lumping(x)], f[x]);
            EXPECT_GE(p.upper[m.lumping(x)], f[x]);
        }
        for (std::size_t b = 0; b < m.lumping.coarse_size(); ++b) EXPECT_LE(p.lower[b], p.upper[b]);
        const bool equal = vec(p.lower) == vec(p.upper);
        EXPECT_EQ(p.lumpable(), equal);
        EXPECT_EQ(try_lump_function(f, m.lumping).has_value(), equal);
        if (p.lumpable()) {
            EXPECT_EQ(vec(*p.exact), vec(p.lower));
            EXPECT_EQ(vec(*try_lump_function(f, m.lumping)), vec(p.lower));
        }
    }
}

TEST(LumpingProperties, ExpandThenLumpRecovers) {
    Gen gen(22);
    for (int i = 0; i < 200; ++i) {
        const auto m = gen.model();
        const auto g = gen.coarse_function(m.lumping);
        const auto back = try_lump_function(expand_function(g, m.lumping), m.lumping);
        ASSERT_TRUE(back);
        EXPECT_TRUE(*back == g);
    }
}

TEST(LumpingProperties, LumpedDistributionIsValid) {
    Gen gen(23);
    for (int i = 0; i < 200; ++i) {
        const auto m = gen.model();
        const Distribution pi(m.space(), gen.positive_distribution(m.space()->size()));
        const auto d = lump_distribution(pi, m.lumping);
        double s = 0.0;
        for (double p : d.mass()) s += p;
        EXPECT_NEAR(s, 1.0, 1e-12);
        EXPECT_TRUE(d.is_positive());
    }
}
