#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "odxu/errors.hpp"

namespace odxu {

// Interns class-label strings to dense ids, preserving first-seen order.
class LabelTable {
public:
    std::uint16_t intern(const std::string& name);

    // -1 if the name was never interned.
    int find(const std::string& name) const;

    const std::string& name(std::size_t id) const;

    std::size_t size() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    bool operator==(const LabelTable& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::uint16_t> ids_;
};

} // namespace odxu
