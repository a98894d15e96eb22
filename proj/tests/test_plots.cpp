#include "doctest.h"
#include "helpers.hpp"

#include "essential/error.hpp"
#include "essential/plots.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace essential;

namespace {

std::size_t occurrences(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("plots") {
  TEST_CASE("line chart draws each series and escapes text") {
    LineChart c;
    c.title = "accuracy <by> session & selector";
    c.x_label = "session";
    c.y_label = "accuracy (%)";
    c.series.push_back({"uta", {0, 1, 2}, {99, 95, 90}});
    c.series.push_back({"random", {0, 1, 2}, {99, std::nan(""), 85}});
    const std::string svg = render_line_chart(c);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(occurrences(svg, "<polyline") == 2);
    CHECK(occurrences(svg, "<circle") == 5);
    CHECK(svg.find("accuracy &lt;by&gt; session &amp; selector") != std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(render_line_chart(LineChart{}).find("</svg>") != std::string::npos);
  }

  TEST_CASE("confusion heatmap has one cell per entry") {
    const ConfusionMatrix m{{5, 1, 0}, {0, 4, 2}, {1, 1, 3}};
    const std::string svg = render_confusion_heatmap(m, "final");
    CHECK(occurrences(svg, "<rect") == 1 + 9);
    CHECK(svg.find(">final<") != std::string::npos);
  }

  TEST_CASE("text files") {
    const std::string dir = testutil::temp_dir("plots");
    write_text_file(dir + "/a.svg", "<svg/>");
    std::ifstream in(dir + "/a.svg");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "<svg/>");
    try {
      write_text_file(dir + "/missing/dir/a.svg", "x");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
    }
  }
}
