#include "sedkit/manifest.hpp"

#include "test_util.hpp"

using namespace sedkit;
using testutil::TempDir;
using testutil::thrown_code;

namespace {
const Vocab kVocab = Vocab::from({"Dog", "Blender", "Cat"});
}

TEST_CASE("weak manifest rows parse into tag sets") {
  TempDir tmp("weak");
  const auto path = tmp.path() / "weak.tsv";
  write_file_atomic(path, "a.wav\tDog,Blender\nb.wav\tCat\n");
  const auto labels = load_weak_manifest(path, kVocab);
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].clip_id == "a.wav");
  CHECK(labels[0].tags == std::vector<std::string>{"Dog", "Blender"});
  CHECK(labels[1].tags == std::vector<std::string>{"Cat"});
}

TEST_CASE("weak manifest header row is skipped and order preserved") {
  TempDir tmp("weak_hdr");
  const auto path = tmp.path() / "weak.tsv";
  write_file_atomic(path, "filename\tevent_labels\nz.wav\tDog\na.wav\tCat\n");
  const auto labels = load_weak_manifest(path, kVocab);
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].clip_id == "z.wav");
  CHECK(labels[1].clip_id == "a.wav");
}

TEST_CASE("weak manifest errors") {
  TempDir tmp("weak_err");
  const auto path = tmp.path() / "weak.tsv";

  SECTION("unknown class names the offending tag") {
    write_file_atomic(path, "a.wav\tDog,Unicorn\n");
    try {
      load_weak_manifest(path, kVocab);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::unknown_class);
      CHECK(std::string(e.what()).find("Unicorn") != std::string::npos);
    }
  }
  SECTION("duplicate filename") {
    write_file_atomic(path, "a.wav\tDog\na.wav\tCat\n");
    REQUIRE(thrown_code([&] { load_weak_manifest(path, kVocab); }) == Errc::duplicate_clip);
  }
  SECTION("empty tag list") {
    write_file_atomic(path, "a.wav\t\n");
    REQUIRE(thrown_code([&] { load_weak_manifest(path, kVocab); }) == Errc::empty_tags);
  }
  SECTION("duplicate tags collapse to a set") {
    write_file_atomic(path, "a.wav\tDog,Dog,Cat\n");
    const auto labels = load_weak_manifest(path, kVocab);
    CHECK(labels[0].tags == std::vector<std::string>{"Dog", "Cat"});
  }
}

TEST_CASE("strong manifest rows parse into events") {
  TempDir tmp("strong");
  const auto path = tmp.path() / "strong.tsv";
  write_file_atomic(path, "a.wav\t1.0\t2.5\tDog\n");
  const auto events = load_strong_manifest(path, kVocab);
  REQUIRE(events.size() == 1);
  CHECK(events[0].clip_id == "a.wav");
  CHECK(events[0].onset == 1.0);
  CHECK(events[0].offset == 2.5);
  CHECK(events[0].label == "Dog");
}

TEST_CASE("strong manifest rejects zero-length events") {
  TempDir tmp("strong_zero");
  const auto path = tmp.path() / "strong.tsv";
  write_file_atomic(path, "a.wav\t2.0\t2.0\tDog\n");
  REQUIRE(thrown_code([&] { load_strong_manifest(path, kVocab); }) == Errc::parse_error);
}

TEST_CASE("empty strong manifest yields an empty list") {
  TempDir tmp("strong_empty");
  const auto path = tmp.path() / "strong.tsv";
  write_file_atomic(path, "");
  CHECK(load_strong_manifest(path, kVocab).empty());
}

TEST_CASE("strong manifest errors on bad rows") {
  TempDir tmp("strong_err");
  const auto path = tmp.path() / "strong.tsv";
  SECTION("non-numeric time") {
    write_file_atomic(path, "a.wav\tabc\t2.0\tDog\n");
    REQUIRE(thrown_code([&] { load_strong_manifest(path, kVocab); }) == Errc::parse_error);
  }
  SECTION("unknown class") {
    write_file_atomic(path, "a.wav\t1.0\t2.0\tUnicorn\n");
    REQUIRE(thrown_code([&] { load_strong_manifest(path, kVocab); }) == Errc::unknown_class);
  }
  SECTION("negative onset") {
    write_file_atomic(path, "a.wav\t-1.0\t2.0\tDog\n");
    REQUIRE(thrown_code([&] { load_strong_manifest(path, kVocab); }) == Errc::parse_error);
  }
  SECTION("bad source value") {
    write_file_atomic(path, "a.wav\t1.0\t2.0\tDog\toracle\n");
    REQUIRE(thrown_code([&] { load_strong_manifest(path, kVocab); }) == Errc::parse_error);
  }
}

TEST_CASE("strong manifest round-trips with the provenance column") {
  TempDir tmp("strong_rt");
  const auto path = tmp.path() / "strong.tsv";
  std::vector<StrongEvent> events = {{"a.wav", 0.5, 1.25, "Dog", "nmf"},
                                     {"a.wav", 2.0, 3.0, "Cat", "model"},
                                     {"b.wav", 0.0, 10.0, "Blender", "ground_truth"}};
  write_strong_manifest(path, events, /*with_source=*/true);
  const auto loaded = load_strong_manifest(path, kVocab);
  REQUIRE(loaded.size() == events.size());
  for (size_t i = 0; i < events.size(); ++i) {
    CHECK(loaded[i].clip_id == events[i].clip_id);
    CHECK(loaded[i].onset == Catch::Approx(events[i].onset).margin(1e-6));
    CHECK(loaded[i].offset == Catch::Approx(events[i].offset).margin(1e-6));
    CHECK(loaded[i].label == events[i].label);
    CHECK(loaded[i].source == events[i].source);
  }
}

TEST_CASE("weak manifest round-trips") {
  TempDir tmp("weak_rt");
  const auto path = tmp.path() / "weak.tsv";
  std::vector<WeakClipLabel> labels = {{"a.wav", {"Dog", "Cat"}}, {"b.wav", {"Blender"}}};
  write_weak_manifest(path, labels);
  const auto loaded = load_weak_manifest(path, kVocab);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].tags == labels[0].tags);
  CHECK(loaded[1].tags == labels[1].tags);
}

TEST_CASE("vocabulary lookups") {
  CHECK(kVocab.id("Dog") == 0);
  CHECK(kVocab.id("Cat") == 2);
  CHECK(kVocab.contains("Blender"));
  CHECK_FALSE(kVocab.contains("Unicorn"));
  REQUIRE(thrown_code([&] { kVocab.id("Unicorn"); }) == Errc::unknown_class);
  REQUIRE(thrown_code([] { Vocab::from({"A", "A"}); }) == Errc::bad_argument);
}
