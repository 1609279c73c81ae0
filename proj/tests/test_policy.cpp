#include "support.hpp"

#include "catpol/policy.hpp"

#include <doctest.h>

#include <set>

using namespace catpol;
using namespace catpol::testing;

namespace {

MultimodalPolicy small_policy(ModeMethod method, std::uint64_t seed, Eigen::Index n = 2, Eigen::Index m = 3)
{
    Rng rng(seed);
    return make_multimodal_policy({3, 2, n, m, 8}, method, GumbelConfig{}, rng);
}

void zero_out(MlpParams& mlp)
{
    for (auto& l : mlp) {
        l.weight.setZero();
        l.bias.setZero();
    }
}

} // namespace

TEST_CASE("networks have the documented layer structure")
{
    Rng rng(1);
    const auto pol = make_multimodal_policy({5, 2, 4, 3, 16}, ModeMethod::STE, GumbelConfig{}, rng);
    REQUIRE(pol.f_b.size() == 3);
    REQUIRE(pol.f_a.size() == 3);
    CHECK(mlp_input_width(pol.f_b) == 5);
    CHECK(mlp_output_width(pol.f_b) == 12);
    CHECK(mlp_input_width(pol.f_a) == 12);
    CHECK(mlp_output_width(pol.f_a) == 4);
    CHECK(pol.f_b.back().act == Activation::Linear);
    CHECK(pol.f_b.front().act == Activation::Elu);

    const auto uni = make_unimodal_policy({5, 2, 4, 3, 16}, rng);
    REQUIRE(uni.f.size() == 4);
    CHECK(mlp_output_width(uni.f) == 4);
}

TEST_CASE("initialisation is Glorot-uniform with zero biases")
{
    Rng rng(2);
    const auto mlp = make_mlp({6, 10, 3}, rng);
    for (const auto& l : mlp) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
        CHECK(l.weight.cwiseAbs().maxCoeff() <= limit);
        CHECK(l.bias.isZero());
    }
}

TEST_CASE("policy validation rejects inconsistent widths")
{
    auto pol = small_policy(ModeMethod::STE, 3);
    CHECK_NOTHROW(pol.validate());
    pol.n_classes = 4;
    CHECK_THROWS_AS(pol.validate(), std::invalid_argument);
    Rng rng(1);
    auto uni = make_unimodal_policy({3, 2, 1, 2, 8}, rng);
    uni.f.pop_back();
    CHECK_THROWS(uni.validate());
}

TEST_CASE("zero f_b gives zero logits and index-0 deterministic modes")
{
    auto pol = small_policy(ModeMethod::STE, 4);
    zero_out(pol.f_b);
    Rng rng(5);
    const Mat states = random_mat(rng, 4, 3);
    const Mat logits = mode_logits(pol, states);
    CHECK(logits.rows() == 8);
    CHECK(logits.cols() == 3);
    CHECK(logits.isZero());
    CHECK((softmax_rows(logits).array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);
    const ActionValue a = act_deterministic(pol, states);
    for (auto idx : a.mode_index)
        CHECK(idx == 0);
}

TEST_CASE("batched logits are independent per-state blocks")
{
    const auto pol = small_policy(ModeMethod::STE, 6);
    Rng rng(7);
    const Mat states = random_mat(rng, 5, 3);
    const Mat all = mode_logits(pol, states);
    for (Eigen::Index b = 0; b < 5; ++b) {
        const Mat one = mode_logits(pol, states.row(b));
        CHECK(all.middleRows(b * 2, 2) == one);
    }
}

TEST_CASE("mode logits match central differences w.r.t. f_b")
{
    Rng rng(8);
    const auto pol = small_policy(ModeMethod::STE, 9);
    const Mat states = random_mat(rng, 3, 3);
    const Mat w = random_mat(rng, 6, 3);
    std::vector<Mat> leaves;
    for (const auto& l : pol.f_b) {
        leaves.push_back(l.weight);
        leaves.push_back(l.bias);
    }
    const double err = max_fd_error(
        [&](Tape& t, const std::vector<Var>& v) {
            Mlp<Var> f;
            for (std::size_t i = 0; i < pol.f_b.size(); ++i)
                f.push_back({v[2 * i], v[2 * i + 1], pol.f_b[i].act});
            Var logits = reshape(mlp_forward(f, t.constant(states)), 6, 3);
            return sum(mul(logits, t.constant(w)));
        },
        leaves);
    CHECK(err <= 1e-6);
}

TEST_CASE("zero action head with no noise yields a zero action")
{
    Rng rng(10);
    auto pol = make_multimodal_policy({3, 1, 1, 2, 8}, ModeMethod::STE, GumbelConfig{}, rng);
    zero_out(pol.f_a);
    Tape t;
    ActOptions opts;
    opts.zero_action_noise = true;
    const ActionSample s = act(pol, random_mat(rng, 2, 3), rng, t, opts);
    CHECK(s.action.value().isZero());
}

TEST_CASE("acting is deterministic given the generator state")
{
    for (auto method : {ModeMethod::STE, ModeMethod::Gumbel}) {
        const auto pol = small_policy(method, 11);
        Rng data(12);
        const Mat states = random_mat(data, 4, 3);
        Rng a = Rng::stream(1, "act"), b = Rng::stream(1, "act");
        Tape ta, tb;
        const ActionSample x = act(pol, states, a, ta);
        const ActionSample y = act(pol, states, b, tb);
        CHECK(x.action.value() == y.action.value());
        CHECK(x.mode->value() == y.mode->value());
        CHECK(x.mode_index == y.mode_index);
    }
}

TEST_CASE("action gradients reach f_b through the mode sample")
{
    for (auto method : {ModeMethod::STE, ModeMethod::Gumbel}) {
        CAPTURE(static_cast<int>(method));
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto pol = small_policy(method, 20 + seed);
            Rng rng(30 + seed);
            Tape t;
            BoundMultimodal bound = bind_policy(t, pol);
            const ActionSample s = act(bound, t.constant(random_mat(rng, 4, 3)), rng);
            t.backward(sum(mul(s.action, t.constant(random_mat(rng, 4, 2)))));
            double norm = 0.0;
            for (const auto& l : bound.f_b)
                norm += l.weight.grad().squaredNorm();
            CHECK(norm > 0.0);
        }
    }
}

TEST_CASE("mode index agrees with the argmax of each factor")
{
    const auto pol = small_policy(ModeMethod::Gumbel, 13, 3, 4);
    Rng rng(14);
    Tape t;
    const ActionSample s = act(pol, random_mat(rng, 6, 3), rng, t);
    const Mat& z = s.mode->value();
    for (Eigen::Index b = 0; b < 6; ++b) {
        const Mat blocks = reshape(Mat(z.row(b)), 3, 4);
        const auto arg = argmax_rows(blocks);
        CHECK(s.mode_index[static_cast<std::size_t>(b)] == encode_mode(arg, 4));
    }
}

TEST_CASE("the action head never sees the state")
{
    const auto pol = small_policy(ModeMethod::STE, 15);
    Rng rng(16);
    Mat mode = Mat::Zero(2, 6);
    mode(0, 1) = mode(0, 3) = 1.0;
    mode(1, 2) = mode(1, 4) = 1.0;
    ActOptions opts;
    opts.fixed_mode = mode;
    Tape t1, t2;
    Rng r1(1), r2(1);
    const ActionSample a = act(pol, random_mat(rng, 2, 3), r1, t1, opts);
    const ActionSample b = act(pol, random_mat(rng, 2, 3, 10.0), r2, t2, opts);
    CHECK(a.mean.value() == b.mean.value());
    CHECK(a.log_std.value() == b.log_std.value());
}

TEST_CASE("deterministic acting")
{
    auto pol = small_policy(ModeMethod::STE, 17, 1, 3);
    Rng rng(18);
    const Mat state = random_mat(rng, 1, 3);
    const ActionValue a = act_deterministic(pol, state);
    const ActionValue b = act_deterministic(pol, state);
    CHECK(a.action == b.action);
    CHECK(a.mode_index == b.mode_index);
    CHECK(a.action == a.mean.array().tanh().matrix());

    zero_out(pol.f_b);
    pol.f_b.back().bias(0, 0) = 5.0;
    CHECK(act_deterministic(pol, state).mode_index[0] == 0);
    pol.f_b.back().bias(0, 0) = 0.0;
    pol.f_b.back().bias(0, 2) = 5.0;
    CHECK(act_deterministic(pol, state).mode_index[0] == 2);
}

TEST_CASE("unimodal baseline")
{
    Rng rng(19);
    auto uni = make_unimodal_policy({3, 2, 1, 2, 8}, rng);
    Policy pol = uni;

    SUBCASE("zero weights and no noise act at zero")
    {
        zero_out(std::get<UnimodalPolicy>(pol).f);
        Tape t;
        ActOptions opts;
        opts.zero_action_noise = true;
        const ActionSample s = act(bind_policy(t, pol), t.constant(random_mat(rng, 3, 3)), rng, opts);
        CHECK(s.action.value().isZero());
        CHECK_FALSE(s.mode.has_value());
    }

    SUBCASE("actions lie strictly inside the box")
    {
        for (int i = 0; i < 20; ++i) {
            Tape t;
            const ActionSample s = act(bind_policy(t, pol), t.constant(random_mat(rng, 8, 3, 30.0)), rng);
            CHECK(s.action.value().cwiseAbs().maxCoeff() < 1.0);
        }
    }

    SUBCASE("gradients to every layer match central differences")
    {
        const Mat states = random_mat(rng, 3, 3);
        const Mat eps = random_mat(rng, 3, 2);
        const Mat w = random_mat(rng, 3, 2);
        std::vector<Mat> leaves;
        for (const auto& l : uni.f) {
            leaves.push_back(l.weight);
            leaves.push_back(l.bias);
        }
        const double err = max_fd_error(
            [&](Tape& t, const std::vector<Var>& v) {
                Mlp<Var> f;
                for (std::size_t i = 0; i < uni.f.size(); ++i)
                    f.push_back({v[2 * i], v[2 * i + 1], uni.f[i].act});
                auto parts = split_cols(mlp_forward(f, t.constant(states)), {2, 2});
                const auto s = squashed_gaussian_sample(make_squashed_gaussian(parts[0], parts[1]), eps);
                return sum(mul(s.action, t.constant(w)));
            },
            leaves);
        CHECK(err <= 1e-6);
    }

    SUBCASE("state width mismatch is rejected")
    {
        Tape t;
        CHECK_THROWS_AS(act(bind_policy(t, pol), t.constant(Mat::Zero(1, 4)), rng), std::invalid_argument);
    }
}

TEST_CASE("mode indices round-trip exhaustively")
{
    for (Eigen::Index n = 1; n <= 3; ++n)
        for (Eigen::Index m = 2; m <= 4; ++m) {
            const std::int64_t count = mode_count(n, m);
            std::set<std::int64_t> seen;
            for (std::int64_t i = 0; i < count; ++i) {
                const auto digits = decode_mode(i, n, m);
                CHECK(static_cast<Eigen::Index>(digits.size()) == n);
                CHECK(encode_mode(digits, m) == i);
                seen.insert(i);
            }
            CHECK(static_cast<std::int64_t>(seen.size()) == count);
        }
    const std::vector<Eigen::Index> digits{1, 0, 2};
    CHECK(encode_mode(digits, 3) == 1 * 9 + 0 * 3 + 2);
}

TEST_CASE("oversized mode spaces are detected")
{
    CHECK(mode_space_fits(8, 8));
    CHECK_FALSE(mode_space_fits(16, 16));
    CHECK_THROWS_AS(mode_count(16, 16), std::overflow_error);
}

TEST_CASE("mode usage histogram")
{
    const auto pol = small_policy(ModeMethod::STE, 21);
    Rng rng(22);
    const Mat one = random_mat(rng, 1, 3);

    const ModeHistogram same = mode_usage_histogram(pol, one.replicate(10, 1));
    CHECK(same.distinct == 1);
    CHECK(same.total == 10);

    const ModeHistogram many = mode_usage_histogram(pol, random_mat(rng, 50, 3, 3.0));
    std::int64_t total = 0;
    for (const auto& [idx, c] : many.counts)
        total += c;
    CHECK(total == 50);
    CHECK(many.total == 50);

    CHECK_THROWS_AS(mode_usage_histogram(pol, Mat(0, 3)), std::invalid_argument);
}

TEST_CASE("hand-built logits select one mode per state cluster")
{
    // One state feature x. Hidden units carry x and -x; the last layer makes
    // factor 0 prefer class 0 and factor 1 prefer class 1 exactly when x > 0.
    Rng rng(23);
    auto pol = make_multimodal_policy({1, 1, 2, 2, 2}, ModeMethod::STE, GumbelConfig{}, rng);
    zero_out(pol.f_b);
    pol.f_b[0].weight << 1.0, -1.0;
    pol.f_b[1].weight << 1.0, 0.0, 0.0, 1.0;
    pol.f_b[2].weight << 1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0;

    Mat states(20, 1);
    for (Eigen::Index i = 0; i < 20; ++i)
        states(i, 0) = (i % 2 == 0 ? 1.0 : -1.0) + 0.05 * rng.normal();
    const ModeHistogram h = mode_usage_histogram(pol, states);
    CHECK(h.distinct == 2);
    const std::vector<Eigen::Index> pos{0, 1}, neg{1, 0};
    CHECK(h.counts.at(encode_mode(pos, 2)) == 10);
    CHECK(h.counts.at(encode_mode(neg, 2)) == 10);
}

TEST_CASE("named parameters follow a fixed order")
{
    Policy pol = small_policy(ModeMethod::STE, 24);
    const auto named = named_parameters(pol);
    REQUIRE(named.size() == 12);
    CHECK(named.front().name == "policy.f_b.0.weight");
    CHECK(named[1].name == "policy.f_b.0.bias");
    CHECK(named.back().name == "policy.f_a.2.bias");

    Tape t;
    const auto vars = parameter_vars(bind_policy(t, pol));
    REQUIRE(vars.size() == named.size());
    for (std::size_t i = 0; i < vars.size(); ++i)
        CHECK(vars[i].value() == *named[i].value);
}
