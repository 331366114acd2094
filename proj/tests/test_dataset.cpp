#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "helpers.hpp"

using Catch::Approx;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) : path("/tmp/lgp_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

lgp::DataSchema basic_schema() {
  lgp::DataSchema s;
  s.response = "y";
  s.columns["id"] = {lgp::CovariateKind::Categorical, false, {}};
  s.columns["age"] = {lgp::CovariateKind::Continuous, false, {}};
  s.columns["diseaseAge"] = {lgp::CovariateKind::Continuous, true, {}};
  return s;
}

}  // namespace

TEST_CASE("csv loading with missing values") {
  TempFile f("load.csv");
  write_file(f.path,
             "id,age,diseaseAge,y\n"
             "a,1.5,-2,0.25\n"
             "a,2.5,-1,0.5\n"
             "b,1.5,,1\n"
             "b,2.5,NaN,-1\n");
  lgp::LongitudinalDataset ds = lgp::LongitudinalDataset::load_csv(f.path, basic_schema());
  CHECK(ds.num_rows() == 4);
  CHECK(ds.column("id").levels == std::vector<std::string>{"a", "b"});
  CHECK(ds.column("id").codes == std::vector<int>{1, 1, 2, 2});
  CHECK(ds.column("age").values[0] == 1.5);
  CHECK(ds.column("diseaseAge").missing == std::vector<char>{0, 0, 1, 1});
  CHECK(std::isnan(ds.column("diseaseAge").values[2]));
  CHECK(ds.response()[3] == -1.0);
  // "age" becomes the default time column
  CHECK(ds.time_column() == "age");
}

TEST_CASE("csv errors carry position") {
  TempFile f("bad.csv");
  lgp::DataSchema s = basic_schema();

  SECTION("missing value in non-maskable column") {
    write_file(f.path, "id,age,diseaseAge,y\na,,0,1\n");
    CHECK_THROWS_WITH(lgp::LongitudinalDataset::load_csv(f.path, s),
                      Catch::Matchers::ContainsSubstring(":2:") &&
                          Catch::Matchers::ContainsSubstring("age"));
  }
  SECTION("header column not in schema") {
    write_file(f.path, "id,age,diseaseAge,extra,y\na,1,0,9,1\n");
    CHECK_THROWS_WITH(lgp::LongitudinalDataset::load_csv(f.path, s),
                      Catch::Matchers::ContainsSubstring("extra"));
  }
  SECTION("schema column missing from header") {
    write_file(f.path, "id,age,y\na,1,1\n");
    CHECK_THROWS_WITH(lgp::LongitudinalDataset::load_csv(f.path, s),
                      Catch::Matchers::ContainsSubstring("diseaseAge"));
  }
  SECTION("wrong field count") {
    write_file(f.path, "id,age,diseaseAge,y\na,1,0\n");
    CHECK_THROWS_WITH(lgp::LongitudinalDataset::load_csv(f.path, s),
                      Catch::Matchers::ContainsSubstring(":2:"));
  }
  SECTION("non-numeric response") {
    write_file(f.path, "id,age,diseaseAge,y\na,1,0,zap\n");
    CHECK_THROWS(lgp::LongitudinalDataset::load_csv(f.path, s));
  }
  SECTION("level not in declared set") {
    s.columns["id"].levels = {"a"};
    write_file(f.path, "id,age,diseaseAge,y\nb,1,0,1\n");
    CHECK_THROWS_WITH(lgp::LongitudinalDataset::load_csv(f.path, s),
                      Catch::Matchers::ContainsSubstring("'b'"));
  }
}

TEST_CASE("csv round trip is exact") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  TempFile f("roundtrip.csv");
  ds.write_csv(f.path);
  lgp::DataSchema s = basic_schema();
  s.columns["group"] = {lgp::CovariateKind::Categorical, false, {}};
  s.time = "age";
  lgp::LongitudinalDataset back = lgp::LongitudinalDataset::load_csv(f.path, s);
  CHECK(ds == back);
}

TEST_CASE("trials validation") {
  TempFile f("trials.csv");
  lgp::DataSchema s;
  s.response = "y";
  s.trials = "trials";
  s.columns["id"] = {lgp::CovariateKind::Categorical, false, {}};
  s.columns["age"] = {lgp::CovariateKind::Continuous, false, {}};

  SECTION("valid") {
    write_file(f.path, "id,age,y,trials\na,1,3,10\na,2,0,4\n");
    lgp::LongitudinalDataset ds = lgp::LongitudinalDataset::load_csv(f.path, s);
    CHECK(ds.has_trials());
    CHECK(ds.trials()[0] == 10.0);
  }
  SECTION("response above trials") {
    write_file(f.path, "id,age,y,trials\na,1,5,4\n");
    CHECK_THROWS(lgp::LongitudinalDataset::load_csv(f.path, s));
  }
  SECTION("fractional response") {
    write_file(f.path, "id,age,y,trials\na,1,0.5,4\n");
    CHECK_THROWS(lgp::LongitudinalDataset::load_csv(f.path, s));
  }
  SECTION("zero trials") {
    write_file(f.path, "id,age,y,trials\na,1,0,0\n");
    CHECK_THROWS(lgp::LongitudinalDataset::load_csv(f.path, s));
  }
}

TEST_CASE("z-scoring continuous columns") {
  lgp::LongitudinalDataset ds = testutil::tiny_dataset();
  lgp::LongitudinalDataset nd = ds.normalize_continuous("age");
  const auto& col = nd.column("age");
  double mean = col.values.mean();
  double var = (col.values.array() - mean).square().mean();
  CHECK(mean == Approx(0.0).margin(1e-12));
  CHECK(var == Approx(1.0).epsilon(1e-12));
  // original units recoverable through the stored transform
  for (int i = 0; i < nd.num_rows(); ++i) {
    CHECK(col.center + col.scale * col.values[i] ==
          Approx(ds.column("age").values[i]).margin(1e-12));
  }
  // the source dataset is untouched
  CHECK(ds.column("age").values[1] == 0.3);
}

TEST_CASE("scaling maskable columns keeps zero fixed") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::LongitudinalDataset sd = ds.scale_continuous("diseaseAge");
  const auto& col = sd.column("diseaseAge");
  const auto& orig = ds.column("diseaseAge");
  for (int i = 0; i < sd.num_rows(); ++i) {
    if (orig.missing[i]) {
      CHECK(col.missing[i] == 1);
      continue;
    }
    if (orig.values[i] == 0.0) CHECK(col.values[i] == 0.0);
    CHECK(col.center + col.scale * col.values[i] == Approx(orig.values[i]).margin(1e-12));
  }
  CHECK(col.center == 0.0);
}

TEST_CASE("normalize_for_model follows the maskable policy") {
  lgp::LongitudinalDataset ds = testutil::disease_dataset();
  lgp::ModelSpec spec = testutil::spec_for("y ~ gp(age) + gp_vm(diseaseAge)", ds);
  lgp::LongitudinalDataset nd = lgp::normalize_for_model(ds, spec);
  CHECK(nd.column("age").center != 0.0);
  CHECK(nd.column("diseaseAge").center == 0.0);
  CHECK(nd.column("diseaseAge").scale != 1.0);
}

TEST_CASE("constructor rejects inconsistent data") {
  std::vector<lgp::CovariateColumn> cols;
  cols.push_back(testutil::categorical_column("id", {1, 1}, 1));
  cols.push_back(testutil::continuous_column("age", {1.0, std::nan("")}));
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  // NaN in a non-maskable column
  CHECK_THROWS(lgp::LongitudinalDataset(cols, "y", y, "id"));
  cols[1] = testutil::continuous_column("age", {1.0, 2.0});
  CHECK_NOTHROW(lgp::LongitudinalDataset(cols, "y", y, "id"));
  // id must be categorical
  CHECK_THROWS(lgp::LongitudinalDataset(cols, "y", y, "age"));
}
