#ifndef IST_HISTORY_JSON_HPP
#define IST_HISTORY_JSON_HPP

#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "ist/oracle.hpp"

namespace ist::oracle {

/// Line-delimited JSON history format, one event per line:
/// {"tid":0,"op":"insert","key":5,"arg":7,"res":null,"inv":0,"resp":3}

inline nlohmann::json event_to_json(const Event& e) {
    nlohmann::json j;
    j["tid"] = e.tid;
    j["op"] = op_name(e.op);
    j["key"] = e.key;
    j["arg"] = e.arg;
    if (e.result)
        j["res"] = *e.result;
    else
        j["res"] = nullptr;
    j["inv"] = e.invoke;
    j["resp"] = e.response;
    return j;
}

inline Event event_from_json(const nlohmann::json& j) {
    Event e;
    e.tid = j.at("tid").get<int>();
    std::string op = j.at("op").get<std::string>();
    if (op == "insert")
        e.op = OpKind::Insert;
    else if (op == "delete")
        e.op = OpKind::Erase;
    else if (op == "lookup")
        e.op = OpKind::Lookup;
    else
        throw std::invalid_argument("history: unknown op " + op);
    e.key = j.at("key").get<Key>();
    e.arg = j.value("arg", Value{0});
    if (!j.at("res").is_null()) e.result = j.at("res").get<Value>();
    e.invoke = j.at("inv").get<std::uint64_t>();
    e.response = j.at("resp").get<std::uint64_t>();
    return e;
}

inline void write_history(std::ostream& os, const History& h) {
    for (const auto& e : h) os << event_to_json(e).dump() << '\n';
}

inline History read_history(std::istream& is) {
    History h;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        h.push_back(event_from_json(nlohmann::json::parse(line)));
    }
    return h;
}

} // namespace ist::oracle

#endif
