#pragma once

#include <string>
#include <vector>

#include "ftlab/tensor.hpp"

namespace ftlab {

// Character inventory for the recognition task. Index 0 in the output layer
// is the CTC blank; character i maps to class i+1.
struct Vocabulary {
  std::string chars;  // unique, blank excluded

  static Vocabulary defaults() { return Vocabulary{"abcdefgh"}; }

  std::size_t size_with_blank() const { return chars.size() + 1; }

  std::size_t index_of(char c) const {
    auto pos = chars.find(c);
    check(pos != std::string::npos,
          std::string("unknown character '") + c + "' for vocabulary");
    return pos + 1;
  }

  std::vector<std::size_t> encode(const std::string& text) const {
    std::vector<std::size_t> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(index_of(c));
    return out;
  }

  std::string decode(const std::vector<std::size_t>& labels) const {
    std::string out;
    for (std::size_t l : labels) {
      check(l >= 1 && l <= chars.size(), "label out of vocabulary range");
      out.push_back(chars[l - 1]);
    }
    return out;
  }

  void validate() const {
    for (std::size_t i = 0; i < chars.size(); ++i)
      for (std::size_t j = i + 1; j < chars.size(); ++j)
        check(chars[i] != chars[j], "vocabulary characters must be unique");
  }
};

}  // namespace ftlab
