#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "pcg/pcg.hpp"
#include "support.hpp"

using namespace pcg;

namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(CircuitFile, RoundTripIsByteIdentical) {
  test::TempDir dir("circuit");
  Circuit c = initialize_parameters(build_pd_circuit({4, 4, 3, 2}), 7);
  save_circuit(c, dir.file("a.pcir"));
  Circuit back = load_circuit(dir.file("a.pcir"));
  save_circuit(back, dir.file("b.pcir"));
  EXPECT_EQ(read_bytes(dir.file("a.pcir")), read_bytes(dir.file("b.pcir")));
  EXPECT_EQ(parameter_checksum(back), parameter_checksum(c));
  std::vector<Category> x(16, 1);
  EXPECT_EQ(log_likelihood(back, x), log_likelihood(c, x));
}

TEST(CircuitFile, HeaderFields) {
  auto bytes = serialize_circuit(test::two_component_mixture());
  ASSERT_GE(bytes.size(), 32u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PCIR");
  io::ByteReader r(bytes);
  r.expect_magic("PCIR");
  EXPECT_EQ(r.u32(), kCircuitFormatVersion);
  EXPECT_EQ(r.u32(), 7u);  // nodes
  EXPECT_EQ(r.u32(), 6u);  // edges
  EXPECT_EQ(r.u32(), 2u);
  EXPECT_EQ(r.u32(), 2u);
  EXPECT_EQ(r.u32(), 6u);  // root
}

TEST(CircuitFile, CorruptionIsDetected) {
  auto bytes = serialize_circuit(test::two_component_mixture());
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_circuit(bad_magic), Error);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  try {
    deserialize_circuit(truncated);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
  }
  EXPECT_THROW(load_circuit("/nonexistent/x.pcir"), Error);
}

TEST(CircuitFile, JsonExportMirrorsStructure) {
  auto j = circuit_to_json(test::two_component_mixture());
  EXPECT_EQ(j["num_nodes"], 7);
  EXPECT_EQ(j["nodes"][6]["type"], "sum");
  EXPECT_EQ(j["nodes"][6]["weights"][1], 0.7);
}

TEST(DatasetFile, RoundTrip) {
  test::TempDir dir("dataset");
  ToyDatasetSpec spec;
  spec.num_categories = 5;
  spec.generator = "mixture";
  spec.count = 40;
  Dataset d = generate_toy_dataset(spec);
  save_dataset(d, dir.file("d.pcds"));
  Dataset back = load_dataset(dir.file("d.pcds"));
  EXPECT_EQ(back.values, d.values);
  EXPECT_EQ(back.num_categories, 5u);
  EXPECT_EQ(serialize_dataset(back), read_bytes(dir.file("d.pcds")));
}

TEST(DatasetFile, MissingAndMalformed) {
  try {
    load_dataset("/nonexistent/data.pcds");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DatasetNotFound);
  }
  Dataset d(1, 2, 2);
  d.values = {0, 1};
  auto bytes = serialize_dataset(d);
  bytes.back() = 9;  // high byte of the last entry, now >= C
  EXPECT_THROW(parse_dataset(io::ByteReader(bytes)), Error);
}

TEST(DatasetCsv, RoundTripAndInferCategories) {
  std::istringstream in("# header\n0,1,2\n2,2,0\n");
  Dataset d = read_csv_dataset(in);
  EXPECT_EQ(d.num_samples, 2u);
  EXPECT_EQ(d.num_variables, 3u);
  EXPECT_EQ(d.num_categories, 3u);
  std::ostringstream out;
  write_csv_dataset(out, d);
  EXPECT_EQ(out.str(), "0,1,2\n2,2,0\n");
  std::istringstream ragged("0,1\n1\n");
  EXPECT_THROW(read_csv_dataset(ragged), Error);
  std::istringstream too_big("0,4\n");
  EXPECT_THROW(read_csv_dataset(too_big, 3), Error);
}

TEST(Pnm, GrayRoundTrip) {
  test::TempDir dir("pnm");
  std::vector<Category> values{0, 1, 2, 3, 3, 2};
  write_pnm(categories_to_image(values, 2, 3, 4), dir.file("a.pgm"));
  Image img = read_pnm(dir.file("a.pgm"));
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.width, 3u);
  EXPECT_EQ(img.pixels[1], 85);
  EXPECT_EQ(image_to_categories(img, 4), values);
}

TEST(Pnm, ColorIsChannelMajor) {
  test::TempDir dir("ppm");
  std::vector<Category> values{0, 1, 1, 1, 0, 0};  // R plane then G then B, 1x2
  write_pnm(categories_to_image(values, 1, 2, 2, 3), dir.file("a.ppm"));
  Image img = read_pnm(dir.file("a.ppm"));
  EXPECT_EQ(img.channels, 3u);
  EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255, 0, 255, 255, 0}));  // interleaved RGB
  EXPECT_EQ(image_to_categories(img, 2), values);
}

TEST(ToyData, ReproducibleAndShaped) {
  ToyDatasetSpec spec;
  spec.count = 30;
  spec.seed = 4;
  EXPECT_EQ(generate_toy_dataset(spec).values, generate_toy_dataset(spec).values);
  spec.seed = 5;
  Dataset other = generate_toy_dataset(spec);
  spec.seed = 4;
  EXPECT_NE(generate_toy_dataset(spec).values, other.values);
  spec.generator = "checker";
  spec.num_categories = 3;
  Dataset c = generate_toy_dataset(spec);
  EXPECT_EQ(c.num_variables, 64u);
  for (Category v : c.values) EXPECT_LT(v, 3);
  spec.generator = "nope";
  EXPECT_THROW(generate_toy_dataset(spec), Error);
}

TEST(ToyData, BarsAreConstantAlongTheBar) {
  ToyDatasetSpec spec;
  spec.count = 50;
  Dataset d = generate_toy_dataset(spec);
  for (std::size_t i = 0; i < d.num_samples; ++i) {
    auto img = d.row(i);
    bool rows_const = true, cols_const = true;
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t c = 1; c < 8; ++c) rows_const &= img[r * 8 + c] == img[r * 8];
    for (std::size_t c = 0; c < 8; ++c)
      for (std::size_t r = 1; r < 8; ++r) cols_const &= img[r * 8 + c] == img[c];
    EXPECT_TRUE(rows_const || cols_const) << i;
  }
}
