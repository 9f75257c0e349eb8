#include <cmath>
#include <omp.h>
#include <filesystem>
#include <utility>

#include "doctest.h"
#include "duse/nnet.hpp"
#include "duse/selftest.hpp"

using namespace duse;
using namespace duse::nnet;

namespace {

nnet::architecture small_arch() {
    architecture a;
    a.signal_len = 16;
    a.conv1_filters = 4;
    a.conv1_kernel = 3;
    a.conv2_filters = 4;
    a.conv2_kernel = 3;
    a.hidden = 8;
    a.num_classes = 3;
    return a;
}

std::vector<const signal_record*> view(const std::vector<signal_record>& recs) {
    std::vector<const signal_record*> out;
    for (const auto& r : recs) out.push_back(&r);
    return out;
}

// Two classes: I channel centred at +2 or -2 with unit noise, Q pure noise.
std::vector<signal_record> toy_task(std::size_t n, std::uint64_t seed, std::uint32_t len = 128) {
    rng gen(seed);
    std::vector<signal_record> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = out[i];
        r.label = static_cast<std::uint16_t>(i % 2);
        r.iq.resize(2 * len);
        const double mu = r.label ? 2.0 : -2.0;
        for (std::size_t t = 0; t < len; ++t) r.iq[t] = static_cast<float>(mu + 0.5 * gen.normal());
        for (std::size_t t = len; t < 2 * len; ++t) r.iq[t] = static_cast<float>(0.5 * gen.normal());
    }
    return out;
}

}  // namespace

TEST_CASE("architecture shapes") {
    const auto m = init_model(1, 8);
    CHECK(m.params.conv1_w.size() == 16 * 2 * 7);
    CHECK(m.params.conv2_w.size() == 32 * 16 * 5);
    CHECK(m.params.fc1_w.size() == 64 * 32 * 32);
    CHECK(m.params.fc2_w.size() == 8 * 64);
    CHECK(m.params.fc2_b.size() == 8);
    architecture bad;
    bad.signal_len = 126;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
    bad = architecture{};
    bad.num_classes = 1;
    CHECK_THROWS_AS(bad.validate(), invalid_input);
}

TEST_CASE("init is seeded and fan-in scaled") {
    const auto a = init_model(5, 8), b = init_model(5, 8), c = init_model(6, 8);
    CHECK(a == b);
    CHECK(!(a.params == c.params));
    const auto t = a.params.tensors();
    const double fan_in[] = {14, 14, 80, 80, 1024, 1024, 64, 64};
    for (std::size_t k = 0; k < num_tensors; ++k)
        for (float v : t[k]) CHECK(std::abs(v) <= 1.0 / std::sqrt(fan_in[k]) + 1e-7);
}

TEST_CASE("zero parameters give zero logits and loss ln C") {
    auto m = init_model(1, 8);
    m.params.fill(0.0f);
    const auto recs = toy_task(5, 1);
    const auto batch = view(recs);
    for (float v : forward(m, batch).logits) CHECK(v == 0.0f);
    // toy labels are < 2 < 8, so any label set works
    CHECK(loss_and_gradients(m, batch).loss == doctest::Approx(std::log(8.0)));
}

TEST_CASE("fc2 is linear") {
    auto m = init_model(3, 8);
    std::fill(m.params.fc2_b.begin(), m.params.fc2_b.end(), 0.0f);
    const auto recs = toy_task(4, 2);
    const auto base = forward(m, view(recs));
    for (float& w : m.params.fc2_w) w *= 2.0f;
    const auto doubled = forward(m, view(recs));
    for (std::size_t i = 0; i < base.logits.size(); ++i)
        CHECK(doubled.logits[i] == doctest::Approx(2.0 * base.logits[i]).epsilon(1e-5));
    CHECK(base.feature_dim == 64);
    CHECK(base.features == doubled.features);
}

TEST_CASE("shape and label mismatches are rejected") {
    const auto m = init_model(1, 8);
    auto recs = toy_task(2, 1);
    recs[1].iq.pop_back();
    CHECK_THROWS_AS(forward(m, view(recs)), invalid_input);
    recs = toy_task(2, 1);
    recs[0].label = 8;
    CHECK_THROWS_AS(loss_and_gradients(m, view(recs)), invalid_input);
}

TEST_CASE("analytic gradients match the finite-difference oracle") {
    const auto res = oracle::gradient_suite(10, 11, 1e-3);
    CHECK(res.passed);
    CHECK(res.worst < 1e-3);
}

TEST_CASE("duplicating the batch leaves loss and gradients unchanged") {
    const auto arch = small_arch();
    auto m = init_model(4, arch);
    rng gen(4);
    const auto recs = oracle::random_records(arch, 7, gen);
    auto b1 = view(recs);
    auto b2 = b1;
    b2.insert(b2.end(), b1.begin(), b1.end());
    const auto g1 = loss_and_gradients(m, b1), g2 = loss_and_gradients(m, b2);
    CHECK(g2.loss == doctest::Approx(g1.loss).epsilon(1e-6));
    const auto t1 = g1.grads.tensors(), t2 = g2.grads.tensors();
    for (std::size_t k = 0; k < num_tensors; ++k)
        for (std::size_t i = 0; i < t1[k].size(); ++i)
            CHECK(t2[k][i] == doctest::Approx(t1[k][i]).epsilon(1e-4).scale(1e-6));
}

TEST_CASE("OpenMP kernels agree with the serial reference") {
    const auto m = init_model(9, 8);
    const auto recs = toy_task(75, 3);
    const auto batch = view(recs);
    const auto f1 = forward(m, batch), f2 = serial::forward(m, batch);
    CHECK(f1.logits == f2.logits);
    CHECK(f1.features == f2.features);
    CHECK(per_sample_gradient_norms(m, batch) == serial::per_sample_gradient_norms(m, batch));

    // One reduction chunk: identical summation order, identical bits.
    const batch_view head = batch_view(batch).first(gradient_chunk);
    const auto h1 = loss_and_gradients(m, head), h2 = serial::loss_and_gradients(m, head);
    CHECK(h1.loss == h2.loss);
    CHECK(h1.grads == h2.grads);

    // Several chunks: same sums in a different order.
    const auto g1 = loss_and_gradients(m, batch), g2 = serial::loss_and_gradients(m, batch);
    CHECK(g1.loss == doctest::Approx(g2.loss).epsilon(1e-12));
    const auto t1 = g1.grads.tensors(), t2 = g2.grads.tensors();
    for (std::size_t k = 0; k < num_tensors; ++k)
        for (std::size_t i = 0; i < t1[k].size(); ++i)
            CHECK(t1[k][i] == doctest::Approx(t2[k][i]).epsilon(1e-4).scale(1e-6));
}

TEST_CASE("OpenMP results do not depend on the thread count") {
    const auto m = init_model(10, 8);
    const auto recs = toy_task(75, 4);
    const auto batch = view(recs);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto one = loss_and_gradients(m, batch);
    const auto fone = forward(m, batch);
    omp_set_num_threads(4);
    const auto four = loss_and_gradients(m, batch);
    const auto ffour = forward(m, batch);
    omp_set_num_threads(saved);
    CHECK(one.loss == four.loss);
    CHECK(one.grads == four.grads);
    CHECK(fone.logits == ffour.logits);
}

TEST_CASE("per-sample gradient norm") {
    const auto arch = small_arch();
    auto m = init_model(8, arch);
    rng gen(8);
    const auto recs = oracle::random_records(arch, 4, gen);

    // Against the finite-difference norm.
    for (const auto& r : recs) {
        const signal_record* one[] = {&r};
        const auto numeric = oracle::finite_difference_gradients(m, one, 1e-3);
        double sq = 0.0;
        for (const auto& t : numeric)
            for (double v : t) sq += v * v;
        CHECK(per_sample_gradient_norm(m, r) == doctest::Approx(std::sqrt(sq)).epsilon(1e-3));
    }
    // Independent of batch context.
    const auto norms = per_sample_gradient_norms(m, view(recs));
    for (std::size_t i = 0; i < recs.size(); ++i)
        CHECK(norms[i] == doctest::Approx(per_sample_gradient_norm(m, recs[i])).epsilon(1e-6));

    // A confidently correct sample has a vanishing gradient.
    auto sharp = m;
    sharp.params.fill(0.0f);
    sharp.params.fc2_b[recs[0].label] = 40.0f;
    CHECK(per_sample_gradient_norm(sharp, recs[0]) < 1e-6);
}

TEST_CASE("adam step properties") {
    auto m = init_model(2, small_arch());
    const auto before = m;
    auto st = adam_state::for_model(m);
    auto zero = parameters::zeros(m.arch);
    adam_step(m, zero, st, 1e-3);
    CHECK(m.params == before.params);
    CHECK(st.step == 1);

    auto m2 = before;
    auto st2 = adam_state::for_model(m2);
    auto g = parameters::zeros(m2.arch);
    rng gen(3);
    for (auto t : g.tensors())
        for (float& v : t) v = static_cast<float>(gen.normal());
    adam_step(m2, g, st2, 1e-3);
    const auto tb = before.params.tensors();
    const auto ta = std::as_const(m2.params).tensors();
    const auto tg = std::as_const(g).tensors();
    for (std::size_t k = 0; k < num_tensors; ++k)
        for (std::size_t i = 0; i < ta[k].size(); ++i) {
            const double moved = static_cast<double>(ta[k][i]) - tb[k][i];
            CHECK(moved == doctest::Approx(tg[k][i] > 0 ? -1e-3 : 1e-3).epsilon(1e-3));
        }

    auto m3 = before;
    auto st3 = adam_state::for_model(m3);
    adam_step(m3, g, st3, 1e-3);
    CHECK(m3 == m2);
}

TEST_CASE("training reaches 100% on the toy task") {
    const auto recs = toy_task(256, 5);
    train_config cfg;
    cfg.epochs = 20;
    cfg.shuffle_seed = 1;
    cfg.record_correctness = true;
    const auto res = train(init_model(3, 2), view(recs), cfg);
    const auto fwd = forward(res.model, view(recs));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) correct += predict_label(fwd.logits_of(i)) == recs[i].label;
    CHECK(correct == recs.size());
    REQUIRE(res.log.has_value());
    CHECK(res.log->epochs == 20);
    CHECK(res.log->samples == 256);
    CHECK(res.log->at(19, 0));

    const auto again = train(init_model(3, 2), view(recs), cfg);
    CHECK(again.model == res.model);
}

TEST_CASE("full-batch loss decreases over the first steps") {
    const auto recs = toy_task(64, 6);
    int monotone = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto m = init_model(seed, 2);
        auto st = adam_state::for_model(m);
        double prev = loss_and_gradients(m, view(recs)).loss;
        bool ok = true;
        for (int step = 0; step < 5; ++step) {
            const auto g = loss_and_gradients(m, view(recs));
            adam_step(m, g.grads, st, 1e-3);
            const double now = loss_and_gradients(m, view(recs)).loss;
            ok = ok && now <= prev;
            prev = now;
        }
        monotone += ok;
    }
    CHECK(monotone >= 4);
}

TEST_CASE("train edge cases") {
    const auto recs = toy_task(10, 7);
    const auto m = init_model(1, 2);
    train_config cfg;
    cfg.epochs = 0;
    CHECK(train(m, view(recs), cfg).model == m);
    cfg.epochs = 1;
    CHECK_THROWS_AS(train(m, {}, cfg), invalid_input);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(m, view(recs), cfg), invalid_input);
}

TEST_CASE("predict_label takes the first maximum") {
    const float a[] = {1.0f, 3.0f, 3.0f, 0.0f};
    CHECK(predict_label(a) == 1);
}

TEST_CASE("checkpoint round trip and corruption") {
    const auto m = init_model(12, small_arch());
    const auto bytes = encode_checkpoint(m);
    CHECK(decode_checkpoint(bytes) == m);
    const auto path = std::filesystem::temp_directory_path() / "duse_ckpt_test.amrm";
    save_checkpoint(m, path);
    CHECK(load_checkpoint(path) == m);
    CHECK(model_digest(m) == fnv1a64(bytes));
    CHECK(model_digest(m) != model_digest(init_model(13, small_arch())));

    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK_THROWS_AS(decode_checkpoint(cut), corrupt_file);
    auto bad = bytes;
    bad[0] = std::byte{'Z'};
    CHECK_THROWS_AS(decode_checkpoint(bad), corrupt_file);
}

TEST_CASE("gather") {
    dataset ds;
    ds.signal_len = 4;
    ds.num_classes = 2;
    ds.records.resize(3);
    const index_list idx{2, 0};
    const auto g = gather(ds, idx);
    CHECK(g[0] == &ds.records[2]);
    CHECK(g[1] == &ds.records[0]);
    const index_list bad{3};
    CHECK_THROWS_AS(gather(ds, bad), invalid_input);
}
