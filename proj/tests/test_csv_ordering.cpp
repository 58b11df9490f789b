#include "fhuber/csv.hpp"
#include "fhuber/ordering.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace fhuber;

namespace {

std::string parse_error(const std::string& text, const std::string& response = "y")
{
  std::istringstream in(text);
  try {
    parse_csv(in, response, "mem.csv");
  } catch (const CsvError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path scratch_dir(const std::string& name)
{
  auto dir = std::filesystem::temp_directory_path() / ("fhuber_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::size_t position(const std::vector<Eigen::Index>& order, Eigen::Index col)
{
  return static_cast<std::size_t>(std::find(order.begin(), order.end(), col) - order.begin());
}

bool adjacent(const std::vector<Eigen::Index>& order, Eigen::Index a, Eigen::Index b)
{
  const auto pa = position(order, a), pb = position(order, b);
  return (pa > pb ? pa - pb : pb - pa) == 1;
}

}  // namespace

TEST(Csv, HandWrittenRoundTripIsBitwise)
{
  std::istringstream in("y,a,b\n0.1,1e-300,-3\n2,0.30000000000000004,7.25\n-5.5,1,2\n");
  const Dataset ds = parse_csv(in);
  EXPECT_EQ(ds.data.n(), 3);
  EXPECT_EQ(ds.data.p(), 2);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.data.X()(1, 0), 0.30000000000000004);

  const auto dir = scratch_dir("roundtrip");
  save_csv(dir / "d.csv", ds.data, "y", ds.feature_names);
  const Dataset back = load_dataset(dir / "d.csv");
  EXPECT_EQ(back.data.X(), ds.data.X());
  EXPECT_EQ(back.data.y(), ds.data.y());
  EXPECT_EQ(back.feature_names, ds.feature_names);
  std::ostringstream a, b;
  write_csv(a, ds.data, "y", ds.feature_names);
  write_csv(b, back.data, "y", back.feature_names);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Csv, RandomRoundTripIsBitwise)
{
  Rng rng(1);
  Matrix X(20, 5);
  for (auto& x : X.reshaped()) x = rng.normal() * std::pow(10.0, 20 * rng.uniform() - 10);
  Vector y(20);
  for (auto& v : y) v = rng.student_t(1.5);
  const ProblemData d(X, y);
  const auto dir = scratch_dir("random");
  save_csv(dir / "r.csv", d);
  const ProblemData back = load_csv(dir / "r.csv");
  EXPECT_EQ(back.X(), X);
  EXPECT_EQ(back.y(), y);
  save_vector_csv(dir / "v.csv", y, "beta");
  EXPECT_EQ(load_vector_csv(dir / "v.csv"), y);
}

TEST(Csv, ResponseColumnAnywhereAndQuoted)
{
  std::istringstream in("\xEF\xBB\xBF\"g1\", target ,g2\n1,10,2\n3,20,4\n");
  const Dataset ds = parse_csv(in, "target");
  EXPECT_EQ(ds.data.y(), Vector({{10.0, 20.0}}));
  EXPECT_EQ(ds.data.X()(1, 1), 4.0);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"g1", "g2"}));
}

TEST(Csv, NaCellNamesRowAndColumn)
{
  const std::string msg = parse_error("y,a,b\n1,2,3\n4,NA,6\n");
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("row 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("column 2"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'a'"), std::string::npos) << msg;
  EXPECT_NE(parse_error("y,a,b\n1,,3\n").find("column 2"), std::string::npos);
  EXPECT_NE(parse_error("y,a,b\n1,2,abc\n").find("column 3"), std::string::npos);
}

TEST(Csv, StructuralErrors)
{
  EXPECT_NE(parse_error("y,a,b\n").find("no data rows"), std::string::npos);
  EXPECT_FALSE(parse_error("").empty());
  EXPECT_NE(parse_error("q,a,b\n1,2,3\n").find("response column named 'y'"), std::string::npos);
  EXPECT_FALSE(parse_error("y,a\n1,2\n").empty());
  EXPECT_NE(parse_error("y,a,b\n1,2\n").find("line 2"), std::string::npos);
  EXPECT_FALSE(parse_error("y,a,y\n1,2,3\n").empty());
  EXPECT_THROW(load_csv("/nonexistent/file.csv"), CsvError);
}

TEST(Csv, FormatDoubleRoundTrips)
{
  for (double v : {0.1, 1.0 / 3.0, -2.5e-310, 1e300, 0.0})
    EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(HierarchicalOrder, IdenticalColumnsAdjacent)
{
  Rng rng(2);
  Matrix X(40, 5);
  for (auto& x : X.reshaped()) x = rng.normal();
  X.col(4) = X.col(1);
  const auto order = hierarchical_order(X);
  EXPECT_TRUE(adjacent(order, 1, 4));
  EXPECT_EQ(std::set<Eigen::Index>(order.begin(), order.end()).size(), 5u);
}

TEST(HierarchicalOrder, TwoColumnsDeterministic)
{
  Rng rng(3);
  Matrix X(10, 2);
  for (auto& x : X.reshaped()) x = rng.normal();
  const auto order = hierarchical_order(X);
  EXPECT_EQ(order, (std::vector<Eigen::Index>{0, 1}));
  EXPECT_EQ(hierarchical_order(X), order);
}

TEST(HierarchicalOrder, CorrelatedPairsAdjacent)
{
  Rng rng(4);
  const Eigen::Index n = 500;
  Matrix X(n, 4);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = rng.normal(), b = rng.normal();
    // pairs (0, 2) and (1, 3), corr ~ 0.99 within, ~ 0 across
    X(i, 0) = a;
    X(i, 2) = a + 0.14 * rng.normal();
    X(i, 1) = b;
    X(i, 3) = -b + 0.14 * rng.normal();
  }
  const auto order = hierarchical_order(X);
  EXPECT_TRUE(adjacent(order, 0, 2));
  EXPECT_TRUE(adjacent(order, 1, 3));
}

TEST(HierarchicalOrder, MatchesNaiveAverageLinkage)
{
  // Brute-force agglomeration with the same tie rule: merge the closest pair (lowest representative
  // indices on ties); average linkage recomputed from leaf pairs.
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Eigen::Index p = 9;
    Matrix X(30, p);
    for (auto& x : X.reshaped()) x = rng.normal();
    for (Eigen::Index j = 1; j < p; ++j) X.col(j) += 0.8 * X.col(j - 1);
    Matrix Z = X.rowwise() - X.colwise().mean();
    for (Eigen::Index j = 0; j < p; ++j) Z.col(j).normalize();
    const Matrix dist = (1.0 - (Z.transpose() * Z).array().abs()).matrix();

    std::vector<std::vector<Eigen::Index>> clusters;
    for (Eigen::Index j = 0; j < p; ++j) clusters.push_back({j});
    while (clusters.size() > 1) {
      std::size_t ba = 0, bb = 1;
      double best = INFINITY;
      for (std::size_t a = 0; a < clusters.size(); ++a)
        for (std::size_t b = a + 1; b < clusters.size(); ++b) {
          double s = 0.0;
          for (auto i : clusters[a])
            for (auto j : clusters[b]) s += dist(i, j);
          s /= static_cast<double>(clusters[a].size() * clusters[b].size());
          if (s < best - 1e-12) {
            best = s;
            ba = a;
            bb = b;
          }
        }
      auto merged = clusters[ba];
      merged.insert(merged.end(), clusters[bb].begin(), clusters[bb].end());
      clusters[ba] = merged;
      clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bb));
    }
    EXPECT_EQ(hierarchical_order(X), clusters[0]);
  }
}

TEST(HierarchicalOrder, ZeroVarianceColumnNamed)
{
  Matrix X = Matrix::Random(6, 3);
  X.col(2).setConstant(4.0);
  try {
    hierarchical_order(X);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("column 3"), std::string::npos);
  }
}

TEST(Preprocessing, PermuteNormalizeSplit)
{
  Matrix X(3, 3);
  X << 1, -4, 0, 2, 2, 0, -3, 1, 0;
  const Matrix P = permute_columns(X, {2, 0, 1});
  EXPECT_EQ(P.col(1), X.col(0));
  EXPECT_THROW(permute_columns(X, {0, 1}), std::invalid_argument);

  Matrix N = X;
  const Vector s = normalize_columns(N);
  EXPECT_EQ(s, Vector({{3.0, 4.0, 1.0}}));
  EXPECT_DOUBLE_EQ(N(2, 0), -1.0);
  EXPECT_LE(N.cwiseAbs().maxCoeff(), 1.0);

  Rng rng(6);
  Matrix Xs(10, 2);
  for (auto& x : Xs.reshaped()) x = rng.normal();
  Vector ys(10);
  for (Eigen::Index i = 0; i < 10; ++i) ys[i] = static_cast<double>(i);
  const ProblemData d(Xs, ys);
  const auto [tr, te] = train_test_split(d, default_train_size(10), 7);
  EXPECT_EQ(tr.n(), 7);
  EXPECT_EQ(te.n(), 3);
  std::set<double> seen(tr.y().begin(), tr.y().end());
  seen.insert(te.y().begin(), te.y().end());
  EXPECT_EQ(seen.size(), 10u);
  const auto again = train_test_split(d, 7, 7);
  EXPECT_EQ(again.first.y(), tr.y());
  EXPECT_THROW(train_test_split(d, 10, 1), std::invalid_argument);
  EXPECT_EQ(default_train_size(72), 50);
}
