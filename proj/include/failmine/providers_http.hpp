#pragma once

// httplib-backed transport. Include this in exactly one translation unit per
// binary that needs the live provider (it pulls in cpp-httplib).

#include <httplib.h>

#include "failmine/providers.hpp"

namespace failmine {

class HttplibTransport : public HttpTransport {
public:
    HttpResponse post(const std::string& base_url, const std::string& path,
                      const std::string& json_body,
                      const std::vector<std::pair<std::string, std::string>>& headers) override {
        httplib::Client client(base_url);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers h;
        std::string content_type = "application/json";
        for (const auto& [k, v] : headers) {
            if (to_lower(k) == "content-type")
                content_type = v;
            else
                h.emplace(k, v);
        }
        auto result = client.Post(path, h, json_body, content_type);
        if (!result) throw TransportError("transport failure: " + httplib::to_string(result.error()));
        return HttpResponse{result->status, result->body};
    }
};

inline std::shared_ptr<HttpTransport> make_httplib_transport() {
    return std::make_shared<HttplibTransport>();
}

}  // namespace failmine
