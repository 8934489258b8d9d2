#include "odxu/labels.hpp"

#include <limits>

namespace odxu {

std::uint16_t LabelTable::intern(const std::string& name) {
    auto it = ids_.find(name);
    if (it != ids_.end()) return it->second;
    if (names_.size() > std::numeric_limits<std::uint16_t>::max())
        throw CapacityError("label table full: more than 65536 distinct labels");
    auto id = static_cast<std::uint16_t>(names_.size());
    names_.push_back(name);
    ids_.emplace(name, id);
    return id;
}

int LabelTable::find(const std::string& name) const {
    auto it = ids_.find(name);
    return it == ids_.end() ? -1 : static_cast<int>(it->second);
}

const std::string& LabelTable::name(std::size_t id) const {
    if (id >= names_.size()) throw DataError("label id out of range");
    return names_[id];
}

} // namespace odxu
