#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include "dfm/checkpoint.hpp"
#include "dfm/model.hpp"

namespace {

std::string scratch_path(const std::string& name) {
    std::filesystem::create_directories("ckpt_scratch");
    return "ckpt_scratch/" + name;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-identically", "[checkpoint]") {
    const dfm::VelocityField m = dfm::init(2, {24, 12}, 3, 6, 8, 91);
    const std::string path = scratch_path("model.ckpt");
    dfm::save_checkpoint(path, m);
    const dfm::VelocityField back = dfm::load_checkpoint(path);

    CHECK(back.input_dim == m.input_dim);
    CHECK(back.hidden_dims == m.hidden_dims);
    CHECK(back.num_classes == m.num_classes);
    CHECK(back.time_features == m.time_features);
    CHECK(back.class_embed_dim == m.class_embed_dim);
    REQUIRE(back.parameters.size() == m.parameters.size());
    CHECK((back.parameters - m.parameters).cwiseAbs().maxCoeff() == 0.0);

    // a second save of the loaded model writes the same bytes
    const std::string again = scratch_path("model_again.ckpt");
    dfm::save_checkpoint(again, back);
    CHECK(dfm::file_digest(path) == dfm::file_digest(again));
}

TEST_CASE("corruption and absence raise different errors", "[checkpoint]") {
    CHECK_THROWS_AS(dfm::load_checkpoint(scratch_path("nope.ckpt")), dfm::io_error);

    const std::string junk = scratch_path("junk.ckpt");
    std::ofstream(junk) << "XXXXnot a real checkpoint at all";
    try {
        dfm::load_checkpoint(junk);
        FAIL("expected a format error");
    } catch (const dfm::format_error& e) {
        CHECK(std::string(e.what()).find("not a checkpoint") != std::string::npos);
    }

    // valid header, truncated payload
    const dfm::VelocityField m = dfm::init(2, {8}, 2, 4, 4, 1);
    const std::string full = scratch_path("full.ckpt");
    dfm::save_checkpoint(full, m);
    const auto size = std::filesystem::file_size(full);
    std::filesystem::resize_file(full, size - 16);
    CHECK_THROWS_AS(dfm::load_checkpoint(full), dfm::format_error);
}

TEST_CASE("the digest tracks file content", "[checkpoint]") {
    const dfm::VelocityField m = dfm::init(2, {8}, 2, 4, 4, 2);
    const std::string a = scratch_path("dig_a.ckpt");
    const std::string b = scratch_path("dig_b.ckpt");
    dfm::save_checkpoint(a, m);
    dfm::save_checkpoint(b, m);
    CHECK(dfm::file_digest(a) == dfm::file_digest(b));

    dfm::VelocityField tweaked = m;
    tweaked.parameters(0) += 1e-9;
    dfm::save_checkpoint(b, tweaked);
    CHECK(dfm::file_digest(a) != dfm::file_digest(b));

    CHECK_THROWS_AS(dfm::file_digest(scratch_path("absent.bin")), dfm::io_error);
}
