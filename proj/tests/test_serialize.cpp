#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "helpers.hpp"
#include "setgen/core/serialize.hpp"
#include "setgen/flow/dit.hpp"
#include "setgen/vae/model.hpp"

using namespace setgen;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "setgen_ser_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

template <typename S>
vae::VaeParams<S> small_vae(uint64_t seed) {
    vae::VaeConfig cfg;
    cfg.m = 2;
    cfg.z = 2;
    cfg.d_model = 8;
    cfg.enc_blocks = 1;
    cfg.dec_blocks = 1;
    cfg.n_heads = 2;
    vae::VaeParams<S> p(5, cfg);
    Rng rng(seed);
    p.init(rng);
    return p;
}

ser::Checkpoint vae_checkpoint(vae::VaeParams<double>& p) {
    ser::Checkpoint ck;
    ck.kind = "vae";
    ck.config = {{"d_model", 8}, {"m", 2}, {"z", 2}};
    ck.rng_state = Rng(7).state();
    ck.step = 42;
    ser::pack_params<double>(p, ck);
    return ck;
}

}  // namespace

TEST_CASE("checkpoint round-trips parameters and header") {
    auto p = small_vae<double>(501);
    ser::Checkpoint ck = vae_checkpoint(p);
    const auto path = temp_file("roundtrip.ck");
    ser::write_checkpoint(ck, path.string());

    ser::Checkpoint back = ser::read_checkpoint(path.string());
    CHECK(back.kind == "vae");
    CHECK(back.config == ck.config);
    CHECK(back.rng_state == ck.rng_state);
    CHECK(back.step == 42);
    REQUIRE(back.tensors.size() == ck.tensors.size());

    // values survive exactly at float32 resolution
    auto restored = small_vae<double>(502);
    ser::unpack_params<double>(back, restored);
    p.for_each([&](const std::string& name, Tensor<double>& t) {
        const ser::TensorEntry* e = back.find(name);
        REQUIRE(e != nullptr);
        Mat<float> want = t.v.cast<float>();
        CHECK((e->data - want).cwiseAbs().maxCoeff() == 0.0f);
    });
    CHECK(ser::params_hash<double>(restored) == ser::params_hash<double>(p));
    CHECK(back.find("no.such.tensor") == nullptr);
}

TEST_CASE("checkpoint bytes are deterministic") {
    auto p = small_vae<double>(503);
    ser::Checkpoint ck = vae_checkpoint(p);
    CHECK(ser::encode_checkpoint(ck) == ser::encode_checkpoint(ck));

    const auto p1 = temp_file("det1.ck");
    const auto p2 = temp_file("det2.ck");
    ser::write_checkpoint(ck, p1.string());
    ser::write_checkpoint(ck, p2.string());
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(b1.substr(0, 4) == "SGCK");
}

TEST_CASE("params hash tracks content") {
    auto a = small_vae<double>(504);
    auto b = small_vae<double>(504);
    CHECK(ser::params_hash<double>(a) == ser::params_hash<double>(b));
    b.nb_head.b.v(0, 0) += 1.0;
    CHECK(ser::params_hash<double>(a) != ser::params_hash<double>(b));
}

TEST_CASE("ldm checkpoint carries the condition-space manifest") {
    flow::ConditionSpace cs =
        flow::ConditionSpace::from_schema({{"cond", {"a", "b"}}, {"dose", {"lo", "hi"}}});
    cs.add_combo({0, 0});
    cs.add_combo({1, 1});
    flow::FlowConfig fc;
    fc.width = 8;
    fc.blocks = 1;
    fc.heads = 2;
    fc.c_dim = 4;
    flow::DitParams<double> dp(fc, 3, cs);
    Rng rng(505);
    dp.init(rng);

    ser::Checkpoint ck;
    ck.kind = "ldm";
    ck.config = {{"width", fc.width}};
    ck.extra = {{"condition_space", cs.to_json()},
                {"rho", fc.rho},
                {"mode", flow::to_string(fc.mode)},
                {"sigma_min", fc.interp.sigma_min}};
    ck.rng_state = Rng(9).state();
    ser::pack_params<double>(dp, ck);
    const auto path = temp_file("ldm.ck");
    ser::write_checkpoint(ck, path.string());

    ser::Checkpoint back = ser::read_checkpoint(path.string());
    auto cs2 = flow::ConditionSpace::from_json(back.extra.at("condition_space"));
    CHECK(cs2.attributes == cs.attributes);
    CHECK(cs2.combos == cs.combos);
    CHECK(back.extra.at("mode").get<std::string>() == "joint");

    flow::DitParams<double> dp2(fc, 3, cs2);
    ser::unpack_params<double>(back, dp2);
    CHECK(ser::params_hash<double>(dp2) == ser::params_hash<double>(dp));
}

TEST_CASE("checkpoint reader rejects malformed files") {
    auto p = small_vae<double>(506);
    ser::Checkpoint ck = vae_checkpoint(p);
    const std::string good = ser::encode_checkpoint(ck);

    auto write_raw = [](const std::filesystem::path& path, const std::string& bytes) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    };

    const auto missing = temp_file("missing.ck");
    std::filesystem::remove(missing);
    CHECK_THROWS_WITH(ser::read_checkpoint(missing.string()), ContainsSubstring("cannot open"));

    const auto magic = temp_file("magic.ck");
    std::string bad = good;
    bad[0] = 'X';
    write_raw(magic, bad);
    CHECK_THROWS_WITH(ser::read_checkpoint(magic.string()), ContainsSubstring("magic"));

    const auto version = temp_file("version.ck");
    bad = good;
    bad[4] = 99;
    write_raw(version, bad);
    CHECK_THROWS_WITH(ser::read_checkpoint(version.string()),
                      ContainsSubstring("unsupported checkpoint version"));

    const auto shortf = temp_file("short.ck");
    write_raw(shortf, good.substr(0, 10));
    CHECK_THROWS_WITH(ser::read_checkpoint(shortf.string()), ContainsSubstring("too short"));

    const auto cut_header = temp_file("cut_header.ck");
    write_raw(cut_header, good.substr(0, 20));
    CHECK_THROWS_WITH(ser::read_checkpoint(cut_header.string()),
                      ContainsSubstring("truncated checkpoint header"));

    const auto cut_payload = temp_file("cut_payload.ck");
    write_raw(cut_payload, good.substr(0, good.size() - 8));
    CHECK_THROWS_WITH(ser::read_checkpoint(cut_payload.string()),
                      ContainsSubstring("truncated tensor payload"));

    const auto garbled = temp_file("garbled.ck");
    bad = good;
    bad[16] = '?';  // first byte of the JSON header
    write_raw(garbled, bad);
    CHECK_THROWS_WITH(ser::read_checkpoint(garbled.string()),
                      ContainsSubstring("corrupt checkpoint header"));
}

TEST_CASE("unpack validates the tensor inventory") {
    auto p = small_vae<double>(507);
    ser::Checkpoint ck = vae_checkpoint(p);

    // missing tensor
    ser::Checkpoint missing = ck;
    missing.tensors.pop_back();
    auto target = small_vae<double>(508);
    CHECK_THROWS_WITH(ser::unpack_params<double>(missing, target),
                      ContainsSubstring("missing tensor"));

    // unknown extra tensor
    ser::Checkpoint extra = ck;
    extra.tensors.push_back({"stowaway", Mat<float>::Zero(1, 1)});
    CHECK_THROWS_WITH(ser::unpack_params<double>(extra, target),
                      ContainsSubstring("unknown tensors"));

    // shape mismatch
    ser::Checkpoint reshaped = ck;
    reshaped.tensors[0].data = Mat<float>::Zero(1, 1);
    CHECK_THROWS_WITH(ser::unpack_params<double>(reshaped, target),
                      ContainsSubstring("shape mismatch"));
}
