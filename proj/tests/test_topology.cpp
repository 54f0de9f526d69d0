#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "rowgossip/spectral.hpp"
#include "rowgossip/topology.hpp"

using namespace rowgossip;

TEST(Exponential, SingleNodeHasOnlySelfLoop) {
  auto g = build_exponential(1);
  EXPECT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.has_self_loop(0));
  EXPECT_EQ(g.in_degree(0), 0u);
  EXPECT_EQ(g.edge_count(), 1u);
}

TEST(Exponential, EightNodesUsePowerOfTwoOffsets) {
  auto g = build_exponential(8);
  // offsets {2^j : 2^j < 8} = {1, 2, 4}
  for (std::size_t i = 0; i < 8; ++i) {
    std::set<std::size_t> expected;
    for (std::size_t off : {1u, 2u, 4u}) expected.insert((i + 8 - off) % 8);
    const auto& in = g.in_neighbors(i);
    EXPECT_EQ(std::set<std::size_t>(in.begin(), in.end()), expected) << "node " << i;
  }
}

TEST(Exponential, PowerOfTwoInDegreeIsLog2) {
  for (std::size_t n : {2u, 4u, 16u, 64u}) {
    auto g = build_exponential(n);
    const auto log2n = static_cast<std::size_t>(std::log2(static_cast<double>(n)));
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(g.in_degree(i), log2n);
    EXPECT_TRUE(g.strongly_connected());
  }
}

TEST(Ring, RejectsTooSmall) { EXPECT_THROW(build_directed_ring(1), InvalidArgument); }

TEST(Ring, TwoNodes) {
  auto g = build_directed_ring(2);
  EXPECT_TRUE(g.has_edge(0, 1));
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_TRUE(g.all_self_loops());
  EXPECT_EQ(g.edge_count(), 4u);
}

TEST(Ring, FiveNodeCycle) {
  auto g = build_directed_ring(5);
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_EQ(g.in_degree(i), 1u);
    EXPECT_EQ(g.in_neighbors(i).front(), (i + 4) % 5);
  }
  EXPECT_FALSE(g.has_edge(1, 0));
}

TEST(Grid, SingleCell) {
  auto g = build_grid(1, 1);
  EXPECT_EQ(g.size(), 1u);
  EXPECT_TRUE(g.has_self_loop(0));
}

TEST(Grid, FourByFourDegrees) {
  auto g = build_grid(4, 4);
  ASSERT_EQ(g.size(), 16u);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      std::size_t expected = 4;
      if (r == 0 || r == 3) --expected;
      if (c == 0 || c == 3) --expected;
      EXPECT_EQ(g.in_degree(r * 4 + c), expected);
    }
  }
  for (auto [from, to] : g.edges()) EXPECT_TRUE(g.has_edge(to, from));
}

TEST(Geometric, DeterministicAndConnected) {
  auto a = build_geometric(16, 0.4, 7);
  auto b = build_geometric(16, 0.4, 7);
  EXPECT_TRUE(a.strongly_connected());
  EXPECT_EQ(a.edges(), b.edges());
  auto c = build_geometric(16, 0.4, 8);
  EXPECT_NE(a.edges(), c.edges());
}

TEST(Geometric, TinyRadiusEscalatesUntilConnected) {
  auto g = build_geometric(12, 0.01, 3);
  EXPECT_TRUE(g.strongly_connected());
}

TEST(Geometric, RejectsBadRadius) {
  EXPECT_THROW(build_geometric(4, 0.0, 1), InvalidArgument);
  EXPECT_THROW(build_geometric(4, 2.0, 1), InvalidArgument);
}

TEST(NearestNeighbor, SymmetricDeterministic) {
  auto g = build_nearest_neighbor(16, 3, 11);
  EXPECT_EQ(g.edges(), build_nearest_neighbor(16, 3, 11).edges());
  for (std::size_t i = 0; i < 16; ++i) EXPECT_GE(g.in_degree(i), 3u);
  for (auto [from, to] : g.edges()) EXPECT_TRUE(g.has_edge(to, from));
  EXPECT_THROW(build_nearest_neighbor(4, 4, 1), InvalidArgument);
}

TEST(Weights, SingleNodeIsIdentity) {
  auto a = weights_from_indegree(build_exponential(1));
  EXPECT_EQ(a.size(), 1u);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(Weights, RingRowsAreHalfHalf) {
  auto a = weights_from_indegree(build_directed_ring(3));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(a(i, i), 0.5);
    EXPECT_DOUBLE_EQ(a(i, (i + 2) % 3), 0.5);
    EXPECT_EQ(a.support(i).size(), 2u);
  }
}

TEST(Weights, ExponentialEightIsQuarterOnSupport) {
  auto a = weights_from_indegree(build_exponential(8));
  for (std::size_t i = 0; i < 8; ++i) {
    ASSERT_EQ(a.support(i).size(), 4u);
    for (auto j : a.support(i)) EXPECT_DOUBLE_EQ(a(i, j), 0.25);
  }
}

TEST(Weights, MissingSelfLoopRejected) {
  DirectedGraph g(3);
  g.add_edge(0, 1);
  g.add_edge(1, 2);
  g.add_edge(2, 0);
  EXPECT_THROW(weights_from_indegree(g), InvalidGraph);
}

TEST(Weights, DisconnectedRejected) {
  DirectedGraph g(3);
  g.add_self_loops();
  g.add_edge(0, 1);
  EXPECT_THROW(weights_from_indegree(g), InvalidGraph);
}

TEST(Weights, GeneratorsPassValidation) {
  std::vector<DirectedGraph> graphs{build_exponential(5),    build_exponential(16),      build_directed_ring(7),
                                    build_grid(3, 5),        build_geometric(20, 0.3, 2), build_nearest_neighbor(20, 2, 5)};
  for (const auto& g : graphs) {
    auto a = weights_from_indegree(g);
    auto report = validate_mixing(a.dense());
    EXPECT_TRUE(report.ok) << report.message;
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.dense().row(static_cast<Eigen::Index>(i)).sum(), 1.0, 1e-12);
    EXPECT_TRUE(a.graph() == g);
  }
}

TEST(Validation, DetectsBadMatrices) {
  Matrix bad_sum(2, 2);
  bad_sum << 0.5, 0.6, 0.5, 0.5;
  EXPECT_FALSE(validate_mixing(bad_sum).ok);

  Matrix negative(2, 2);
  negative << 1.5, -0.5, 0.5, 0.5;
  EXPECT_FALSE(validate_mixing(negative).ok);

  // Periodic permutation: irreducible but not primitive.
  Matrix swap(2, 2);
  swap << 0.0, 1.0, 1.0, 0.0;
  EXPECT_FALSE(is_primitive(swap));
  EXPECT_THROW(MixingMatrix::from_dense(swap), InvalidGraph);

  // Reducible.
  Matrix reducible(2, 2);
  reducible << 1.0, 0.0, 0.5, 0.5;
  EXPECT_FALSE(is_primitive(reducible));
}

TEST(Validation, PrimitiveWithoutSelfLoops) {
  // Cycle of length 3 plus a chord making cycle lengths 2 and 3 coprime.
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = 1.0;
  a(1, 2) = 1.0;
  a(2, 0) = 0.5;
  a(2, 1) = 0.5;
  EXPECT_TRUE(is_primitive(a));
}

TEST(TextFormats, MatrixCsvRoundTripsExactly) {
  auto a = weights_from_indegree(build_geometric(9, 0.5, 4)).dense();
  std::stringstream ss;
  write_matrix_csv(ss, a);
  const Matrix back = read_matrix_csv(ss);
  ASSERT_EQ(back.rows(), a.rows());
  EXPECT_EQ((back - a).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TextFormats, MatrixCsvRejectsMalformed) {
  std::stringstream short_rows("2\n1,0\n");
  EXPECT_THROW(read_matrix_csv(short_rows), InvalidArgument);
  std::stringstream wide("1\n1,0\n");
  EXPECT_THROW(read_matrix_csv(wide), InvalidArgument);
  std::stringstream header("x\n");
  EXPECT_THROW(read_matrix_csv(header), InvalidArgument);
}

TEST(TextFormats, EdgeListRoundTrip) {
  auto g = build_directed_ring(4);
  std::stringstream ss;
  write_edge_list(ss, g);
  EXPECT_NE(ss.str().find("0 1\n"), std::string::npos);
  EXPECT_NE(ss.str().find("3 3\n"), std::string::npos);
  EXPECT_TRUE(read_edge_list(ss) == g);
}
