#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "mkgcn/error.hpp"
#include "mkgcn/graph_io.hpp"
#include "test_util.hpp"

namespace mkgcn {
namespace {

TEST(EdgeList, WritesUpperTriangleOnce) {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 2) = a(2, 0) = 0.25;
  a(1, 2) = a(2, 1) = 1.0;
  std::ostringstream out;
  write_edge_list(out, SymmetricMatrix::from_dense(a));
  EXPECT_EQ(out.str(), "0 2 0.25\n1 2 1\n");
}

TEST(EdgeList, RoundTripIsExact) {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix a = testing::random_adjacency(17, 0.3, rng);
    std::stringstream buf;
    write_edge_list(buf, SymmetricMatrix::from_dense(a));
    EXPECT_EQ(read_edge_list(buf, 17).to_dense(), a);
  }
}

TEST(EdgeList, RejectsMalformedInput) {
  auto parse = [](const std::string& text, Index n = 3) {
    std::istringstream in(text);
    return read_edge_list(in, n);
  };
  EXPECT_THROW(parse("0 3 1\n"), Error);
  EXPECT_THROW(parse("1 1 1\n"), Error);
  EXPECT_THROW(parse("0 1 -1\n"), Error);
  EXPECT_THROW(parse("0 1 1\n1 0 1\n"), Error);
  EXPECT_THROW(parse("0 1\n"), Error);
  EXPECT_THROW(parse("0 x 1\n"), Error);
  EXPECT_NO_THROW(parse("# comment\n\n0 1 1\n"));
}

TEST(FeaturesCsv, ParsesAndReordersRows) {
  std::istringstream in(
      "node,f0,f1,label,split\n"
      "1,0.5,1.5,1,test\n"
      "0,-1,2,0,train\n");
  const auto table = read_features_csv(in);
  ASSERT_EQ(table.features.rows(), 2);
  EXPECT_EQ(table.feature_names, (std::vector<std::string>{"f0", "f1"}));
  EXPECT_DOUBLE_EQ(table.features(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(table.features(1, 1), 1.5);
  EXPECT_EQ(table.labels, (std::vector<int>{0, 1}));
  EXPECT_EQ(table.train_mask, (NodeMask{true, false}));
  EXPECT_EQ(table.test_mask, (NodeMask{false, true}));
}

TEST(FeaturesCsv, ErrorsNameTheColumn) {
  auto message = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      read_features_csv(in);
    } catch (const Error& e) {
      return e.what();
    }
    return {};
  };
  EXPECT_NE(message("node,f0,label,split\n0,abc,0,train\n").find("'f0'"), std::string::npos);
  EXPECT_NE(message("node,f0,label,split\n0,1,0,valid\n").find("'split'"), std::string::npos);
  EXPECT_NE(message("node,f0,label,split\n0,1,0,train\n0,1,0,train\n").find("'node'"), std::string::npos);
  EXPECT_NE(message("id,f0,label,split\n").find("header"), std::string::npos);
}

TEST(Dataset, SaveLoadRoundTrip) {
  Rng rng(8);
  const Matrix a = testing::random_adjacency(12, 0.3, rng);
  std::vector<int> labels(12);
  NodeMask train(12), test(12);
  for (int i = 0; i < 12; ++i) {
    labels[i] = i % 3;
    train[i] = i < 9;
    test[i] = i >= 9;
  }
  const PopulationGraph g(SymmetricMatrix::from_dense(a), testing::random_matrix(12, 4, rng), labels, train, test);
  const auto dir = std::filesystem::temp_directory_path() / "mkgcn_graph_io_test";
  std::filesystem::remove_all(dir);
  save_dataset(dir, g);
  const auto loaded = load_dataset(dir / "graph.edges", dir / "features.csv");
  EXPECT_EQ(loaded.adjacency().to_dense(), a);
  EXPECT_EQ(loaded.features(), g.features());
  EXPECT_EQ(loaded.labels(), labels);
  EXPECT_EQ(loaded.train_mask(), train);
  EXPECT_EQ(loaded.test_mask(), test);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mkgcn
