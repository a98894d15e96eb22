#include "doctest.h"

#include "essential/datamodel.hpp"
#include "essential/error.hpp"

using namespace essential;

TEST_SUITE("datamodel") {
  TEST_CASE("presets match the published dataset compositions") {
    auto p = build_schedule(DatasetName::PathMnist, Composition::Imbalanced);
    CHECK(p.num_sessions == 7);
    CHECK(p.base_classes == 3);
    CHECK(p.samples_per_base_class == 1000);
    CHECK(p.samples_per_increment_class == 50);
    CHECK(p.memory_size == 200);
    CHECK(p.resolution == 28);
    CHECK(p.total_classes() == 9);

    auto b = build_schedule(DatasetName::BloodMnist, Composition::LongTailed);
    CHECK(b.num_sessions == 7);
    CHECK(b.base_classes == 2);
    CHECK(b.samples_per_base_class == 800);
    CHECK(b.samples_per_increment_class == 20);
    CHECK(b.memory_size == 60);
    CHECK(b.resolution == 224);
    CHECK(b.total_classes() == 8);

    auto s = build_schedule(DatasetName::Synthetic, Composition::Imbalanced);
    CHECK(s.num_sessions == 3);
    CHECK(s.base_classes == 2);
    CHECK(s.samples_per_base_class == 200);
    CHECK(s.samples_per_increment_class == 20);
    CHECK(s.memory_size == 30);
  }

  TEST_CASE("session class ranges are contiguous") {
    SessionSchedule s;
    s.num_sessions = 4;
    s.base_classes = 3;
    s.classes_per_increment = 2;
    CHECK(s.classes_of_session(0) == std::vector<ClassId>{0, 1, 2});
    CHECK(s.classes_of_session(1) == std::vector<ClassId>{3, 4});
    CHECK(s.classes_of_session(3) == std::vector<ClassId>{7, 8});
    CHECK(s.seen_classes_through(0) == 3);
    CHECK(s.seen_classes_through(2) == 7);
    CHECK(validate_label_spaces(s.label_space()));
  }

  TEST_CASE("label space disjointness") {
    CHECK(validate_label_spaces({{{0, 1}, {2}, {3}}}));
    CHECK_FALSE(validate_label_spaces({{{0, 1}, {1}}}));
    CHECK(validate_label_spaces({{{}, {0}}}));
  }

  TEST_CASE("enum names round-trip and unknown names are config errors") {
    for (auto v : {SelectorKind::Uta, SelectorKind::Random, SelectorKind::Nme, SelectorKind::Pool,
                   SelectorKind::Committee})
      CHECK(parse_selector(to_string(v)) == v);
    for (auto v : {SimilarityKind::Cos, SimilarityKind::Dot, SimilarityKind::Euc, SimilarityKind::Mah})
      CHECK(parse_similarity(to_string(v)) == v);
    for (auto v : {ExpansionVariant::Rotation, ExpansionVariant::Rotation2, ExpansionVariant::ColorPerm,
                   ExpansionVariant::ColorPerm3, ExpansionVariant::RotColorPerm6, ExpansionVariant::RotColorPerm12,
                   ExpansionVariant::None})
      CHECK(parse_expansion_variant(to_string(v)) == v);
    for (auto v : {DatasetName::PathMnist, DatasetName::BloodMnist, DatasetName::Synthetic})
      CHECK(parse_dataset(to_string(v)) == v);
    try {
      parse_dataset("cifar");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
    }
  }

  TEST_CASE("validation names the offending field") {
    RunConfig c = preset_config(DatasetName::Synthetic, Composition::Imbalanced);
    CHECK_NOTHROW(c.validate());
    c.mu = 1.0;
    try {
      c.validate();
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
      CHECK(std::string(e.what()).find("mu") != std::string::npos);
    }
    c = preset_config(DatasetName::Synthetic, Composition::Imbalanced);
    c.schedule.channels = 1;
    CHECK_THROWS_AS(c.validate(), Error);
  }
}
