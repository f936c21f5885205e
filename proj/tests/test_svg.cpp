#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <string>
#include <vector>

#include "dfm/svg.hpp"

namespace {

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t at = hay.find(needle); at != std::string::npos;
         at = hay.find(needle, at + needle.size()))
        ++n;
    return n;
}

std::vector<dfm::PlotGroup> two_class_scatter() {
    dfm::PlotGroup a{0, {{-1.0, 0.0}, {-1.2, 0.3}, {-0.8, -0.2}}};
    dfm::PlotGroup b{1, {{1.0, 0.0}, {1.1, -0.4}, {0.9, 0.2}}};
    return {a, b};
}

}  // namespace

TEST_CASE("flow figures group trajectories by class", "[svg]") {
    std::vector<dfm::PlotPath> paths;
    paths.push_back({1, {{0.0, 0.0}, {0.5, 0.1}, {1.0, 0.0}}});
    paths.push_back({0, {{0.0, 0.0}, {-0.5, 0.1}, {-1.0, 0.0}}});
    paths.push_back({0, {{0.1, -0.1}, {-0.6, 0.0}, {-0.9, 0.1}}});
    const std::string svg = dfm::svg_flows(two_class_scatter(), paths, "flows");

    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
    CHECK(count_occurrences(svg, "class=\"traj-class-0\"") == 1);
    CHECK(count_occurrences(svg, "class=\"traj-class-1\"") == 1);
    CHECK(count_occurrences(svg, "traj-class-2") == 0);
    CHECK(svg.find("flows") != std::string::npos);

    // byte-stable across calls
    CHECK(dfm::svg_flows(two_class_scatter(), paths, "flows") == svg);
}

TEST_CASE("stacked panels draw the first input on top", "[svg]") {
    const auto top = two_class_scatter();
    auto bottom = two_class_scatter();
    for (auto& g : bottom)
        for (auto& p : g.points) p[1] += 0.05;
    const std::string svg = dfm::svg_panels(top, bottom, "fm", "delta");

    const std::size_t at_top = svg.find(">fm<");
    const std::size_t at_bottom = svg.find(">delta<");
    REQUIRE(at_top != std::string::npos);
    REQUIRE(at_bottom != std::string::npos);
    CHECK(at_top < at_bottom);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
}

TEST_CASE("denoise strips label one frame per time", "[svg]") {
    std::vector<std::vector<dfm::PlotGroup>> snapshots(3, two_class_scatter());
    const std::vector<double> times = {0.0, 0.5, 1.0};
    const std::string svg = dfm::svg_denoise_strip(snapshots, times);

    CHECK(count_occurrences(svg, "t = ") == 3);
    CHECK(svg.find("t = 0.50") != std::string::npos);
    CHECK(svg.find("t = 1.00") != std::string::npos);

    CHECK_THROWS_AS(dfm::svg_denoise_strip(snapshots, {0.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(dfm::svg_denoise_strip({}, {}), std::invalid_argument);
}

TEST_CASE("loss curve figures carry a three-series legend", "[svg]") {
    std::vector<dfm::LossCurvePoint> history;
    for (int k = 1; k <= 400; ++k) {
        const double d = 1.0 / k;
        history.push_back({static_cast<double>(k), d, 0.5 * d, 0.75 * d});
    }
    const std::string svg = dfm::svg_loss_curves(history);
    CHECK(svg.find(">fm<") != std::string::npos);
    CHECK(svg.find(">contrastive<") != std::string::npos);
    CHECK(svg.find(">total<") != std::string::npos);
    CHECK(svg.find("#1f77b4") != std::string::npos);
    CHECK(svg.find("#ff7f0e") != std::string::npos);
    CHECK(svg.find("#2ca02c") != std::string::npos);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
}
