"""OCR service client with a content-addressed response cache.

Responses are cached on disk keyed by the SHA-256 of the image bytes, so
re-running extraction never re-bills the API and stays deterministic
once every image has been seen. Failures are recorded per image and the
text left empty, never fatal.
"""

import hashlib
import json
import logging
from pathlib import Path

log = logging.getLogger(__name__)


class OcrClient:
    """POSTs image bytes to an OCR endpoint; `post_fn(url, files, headers)`
    is injectable for testing and must return a requests-style response."""

    def __init__(self, endpoint, api_key=None, cache_dir=None, post_fn=None,
                 timeout=30.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        if post_fn is None:
            import requests

            def post_fn(url, files, headers):
                return requests.post(url, files=files, headers=headers,
                                     timeout=timeout)
        self.post_fn = post_fn
        self.failures = []  # (image_id, reason)

    def _cache_path(self, digest):
        return self.cache_dir / (digest + ".json") if self.cache_dir else None

    def text_for_image(self, image_id, image_bytes):
        """Extracted text, or "" on failure (recorded in self.failures)."""
        digest = hashlib.sha256(image_bytes).hexdigest()
        cache_path = self._cache_path(digest)
        if cache_path and cache_path.exists():
            return json.loads(cache_path.read_text(encoding="utf-8"))["text"]

        headers = {"apikey": self.api_key} if self.api_key else {}
        try:
            response = self.post_fn(self.endpoint, {"file": image_bytes}, headers)
            response.raise_for_status()
            text = self._parse(response.json())
        except Exception as exc:  # noqa: BLE001 - any failure degrades to empty text
            log.warning("OCR failed for %s: %s", image_id, exc)
            self.failures.append((image_id, str(exc)))
            return ""
        if cache_path:
            cache_path.write_text(json.dumps({"text": text}, sort_keys=True),
                                  encoding="utf-8")
        return text

    @staticmethod
    def _parse(payload):
        """Accepts {"text": ...} or the ParsedResults shape used by
        hosted OCR services."""
        if "text" in payload:
            return payload["text"]
        results = payload.get("ParsedResults") or []
        return " ".join(r.get("ParsedText", "") for r in results).strip()


class DisabledOcr:
    """Stand-in when no endpoint is configured: every image reads as empty."""

    failures = ()

    def text_for_image(self, image_id, image_bytes):
        return ""
