#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tabdpt/batcher.hpp"
#include "tabdpt/synthetic.hpp"
#include "tabdpt/trainer.hpp"

namespace tabdpt::testing {

inline Corpus corpus_from(const std::vector<RawTable>& tables) {
  Corpus c;
  for (const auto& t : tables) c.push_back(make_corpus_entry(prepare(t)));
  return c;
}

/// Random rows split off a table into a training and a test part.
struct Split {
  SupervisedView train;
  MatrixXdR test_X;
  std::vector<double> test_y;
};

inline Split split_table(const RawTable& raw, std::size_t n_train) {
  const PreparedTable p = prepare(raw);
  std::vector<std::size_t> tr, te;
  for (std::size_t r = 0; r < p.n_rows(); ++r) (r < n_train ? tr : te).push_back(r);
  Split s;
  s.train = supervised_view(p, tr);
  const SupervisedView test = supervised_view(p, te);
  s.test_X = test.X;
  s.test_y = test.y;
  return s;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << s;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tabdpt_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tabdpt::testing
