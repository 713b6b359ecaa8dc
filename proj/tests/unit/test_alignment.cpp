#include <doctest.h>

#include "gslt/alignment.hpp"
#include "test_support.hpp"

using namespace gslt;

namespace {

// Row-argmax oracle with explicit lowest-id tie-break.
std::vector<int> naive_argmax(const Tensor& t) {
    std::vector<int> out;
    for (int i = 0; i < t.rows(); ++i) {
        int best = 0;
        double best_v = t.at(i, 0);
        for (int j = 1; j < t.cols(); ++j)
            if (t.at(i, j) > best_v) {
                best = j;
                best_v = t.at(i, j);
            }
        out.push_back(best);
    }
    return out;
}

PseudoPrimitiveSequence random_sequence(Rng& rng, int max_len, int max_vocab) {
    const int n = rng.uniform_int(1, max_len);
    const int v = rng.uniform_int(2, max_vocab);
    PseudoPrimitiveSequence p;
    for (int i = 0; i < n; ++i) p.push_back(rng.uniform_int(0, v - 1));
    return p;
}

}  // namespace

TEST_CASE("best_path_decode argmax and tie-break") {
    Tensor one_hot = Tensor::from_values(3, 4,
                                         {9, 0, 0, 0,   // PAD
                                          0, 0, 0, 9,   // gloss 3
                                          0, 0, 0, 9}); // gloss 3
    CHECK(best_path_decode(one_hot) == PseudoPrimitiveSequence{0, 3, 3});

    Tensor uniform = Tensor::full(4, 5, 0.2);
    CHECK(best_path_decode(uniform) == PseudoPrimitiveSequence{0, 0, 0, 0});

    Rng rng(31);
    Tensor logits = test::random_tensor(6, 4, rng);
    CHECK(best_path_decode(logits) == naive_argmax(logits));

    CHECK_THROWS_AS(best_path_decode(Tensor::zeros(3, 1)), ContractError);
}

TEST_CASE("collapse merges runs and drops PAD") {
    CHECK(collapse({7, 7, 0, 7, 0, 5, 5, 0}) == std::vector<int>{7, 7, 5});
    CHECK(collapse({0, 0, 0}).empty());
    CHECK(collapse({4}) == std::vector<int>{4});
    CHECK(collapse({}).empty());
}

TEST_CASE("group_pseudo_labels traced example") {
    const AlignmentTable t = group_pseudo_labels({7, 7, 0, 7, 0, 5, 5, 0});
    REQUIRE(t.groups.size() == 3);
    CHECK(t.groups[0] == GroupedNode{0, 7, {0, 1}});
    CHECK(t.groups[1] == GroupedNode{1, 7, {3}});
    CHECK(t.groups[2] == GroupedNode{2, 5, {5, 6}});
    CHECK(t.pairs == std::vector<std::pair<int, int>>{{0, 0}, {0, 1}, {1, 3}, {2, 5}, {2, 6}});
}

TEST_CASE("group_pseudo_labels degenerate inputs") {
    CHECK(group_pseudo_labels({0, 0, 0, 0}).groups.empty());
    CHECK(group_pseudo_labels({0, 0, 0, 0}).pairs.empty());

    const AlignmentTable single = group_pseudo_labels({2, 2, 2});
    REQUIRE(single.groups.size() == 1);
    CHECK(single.groups[0].frames == std::vector<int>{0, 1, 2});
    CHECK(single.pairs.size() == 3);

    // PAD at position 0 opens no group.
    const AlignmentTable lead = group_pseudo_labels({0, 4});
    REQUIRE(lead.groups.size() == 1);
    CHECK(lead.groups[0] == GroupedNode{0, 4, {1}});
}

TEST_CASE("align_consistency_check accepts construction, rejects corruption") {
    const PseudoPrimitiveSequence p{7, 7, 0, 7, 0, 5, 5, 0};
    AlignmentTable t = group_pseudo_labels(p);
    CHECK(align_consistency_check(t, p));

    AlignmentTable doubled = t;
    doubled.pairs.push_back({0, 1});  // frame 1 now paired twice
    CHECK_FALSE(align_consistency_check(doubled, p));

    AlignmentTable wrong_gloss = t;
    wrong_gloss.groups[1].gloss = 9;
    CHECK_FALSE(align_consistency_check(wrong_gloss, p));

    AlignmentTable gap = t;
    gap.groups[1].gp = 5;
    CHECK_FALSE(align_consistency_check(gap, p));
}

TEST_CASE("alignment invariants over 1000 random sequences") {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const PseudoPrimitiveSequence p = random_sequence(rng, 50, 10);
        const AlignmentTable t = group_pseudo_labels(p);

        CHECK(align_consistency_check(t, p));
        CHECK(t.pairs.size() <= p.size());

        // Frame coverage == non-PAD positions.
        std::vector<int> covered;
        for (const auto& [g, f] : t.pairs) covered.push_back(f);
        std::sort(covered.begin(), covered.end());
        std::vector<int> non_pad;
        for (std::size_t i = 0; i < p.size(); ++i)
            if (p[i] != kPadId) non_pad.push_back(static_cast<int>(i));
        CHECK(covered == non_pad);

        // Sequence consistency.
        std::vector<int> glosses;
        for (const auto& g : t.groups) glosses.push_back(g.gloss);
        CHECK(glosses == collapse(p));

        // L == N iff no PAD present.
        const bool no_pad = non_pad.size() == p.size();
        CHECK((t.pairs.size() == p.size()) == no_pad);

        // Idempotence through expansion.
        const PseudoPrimitiveSequence expanded =
            expand_alignment(t, static_cast<int>(p.size()));
        CHECK(expanded == p);
        CHECK(group_pseudo_labels(expanded) == t);
    }
}
