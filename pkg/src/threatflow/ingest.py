"""Acquire raw threat records from a pulse-style HTTP feed or saved fixture
pages and convert them to ThreatEvents.

The feed protocol is deliberately generic: GET with since/page/limit query
parameters returning a JSON array of pulse objects, one RawRecord per
object.  HTML fixture pages follow the template documented in
docs/fixture-html.md; both parsers map onto the same event fields and
leave canonical countries empty for the normalize stage.
"""

import datetime as dt
import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from html.parser import HTMLParser

import requests

from .errors import CredentialError, ParseError
from .model import ThreatEvent

BACKOFF_BASE = 1.0  # seconds; doubles per retry with +-20% jitter

# all waiting funnels through here so tests can stub it out
_sleep = time.sleep


@dataclass(frozen=True)
class FeedConfig:
    base_url: str
    api_key: str | None = None
    page_size: int = 50
    max_pages: int = 10
    request_timeout: float = 30.0
    max_concurrent_requests: int = 4
    retry_budget: int = 3

    def __post_init__(self):
        if self.page_size < 1:
            raise ValueError("page_size must be >= 1")
        if self.max_pages < 1:
            raise ValueError("max_pages must be >= 1")
        if self.max_concurrent_requests < 1:
            raise ValueError("max_concurrent_requests must be >= 1")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")


@dataclass(frozen=True)
class RawRecord:
    source_id: str
    payload: str
    fetched_at: dt.datetime

    def __post_init__(self):
        if not self.payload:
            raise ValueError("payload must be non-empty")


@dataclass
class FetchResult:
    records: list[RawRecord] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


def _backoff_sleep(attempt: int) -> None:
    delay = BACKOFF_BASE * (2.0**attempt) * random.uniform(0.8, 1.2)
    _sleep(delay)


def _fetch_page(config: FeedConfig, since: dt.date | None, page: int) -> list[dict]:
    """One page with retries; raises CredentialError on 401/403."""
    params: dict[str, str | int] = {"page": page, "limit": config.page_size}
    if since is not None:
        params["since"] = since.isoformat()
    headers = {"X-API-KEY": config.api_key} if config.api_key else {}
    attempt = 0
    while True:
        try:
            response = requests.get(
                config.base_url,
                params=params,
                headers=headers,
                timeout=config.request_timeout,
            )
        except requests.RequestException as exc:
            if attempt >= config.retry_budget:
                raise ConnectionError(f"page {page}: {exc}") from exc
            _backoff_sleep(attempt)
            attempt += 1
            continue
        if response.status_code in (401, 403):
            raise CredentialError(
                f"feed rejected credentials (HTTP {response.status_code})"
            )
        if response.status_code == 429:
            if attempt >= config.retry_budget:
                raise ConnectionError(f"page {page}: rate limited after retries")
            retry_after = response.headers.get("Retry-After")
            try:
                _sleep(float(retry_after)) if retry_after else _backoff_sleep(attempt)
            except ValueError:
                _backoff_sleep(attempt)
            attempt += 1
            continue
        if response.status_code >= 500:
            if attempt >= config.retry_budget:
                raise ConnectionError(
                    f"page {page}: HTTP {response.status_code} after retries"
                )
            _backoff_sleep(attempt)
            attempt += 1
            continue
        response.raise_for_status()
        body = response.json()
        if not isinstance(body, list):
            raise ValueError(f"page {page}: expected a JSON array of pulses")
        return body


def fetch_feed(config: FeedConfig, since: dt.date | None = None) -> FetchResult:
    """Paginate through the feed until an empty page or max_pages.

    Pages are requested in waves of at most max_concurrent_requests.
    Failed pages (after retries) are reported in the result's errors while
    the other pages' records are still returned.
    """
    result = FetchResult()
    fetched_at = dt.datetime.now(dt.timezone.utc)
    page = 1
    stop = False
    while not stop and page <= config.max_pages:
        wave = list(range(page, min(page + config.max_concurrent_requests, config.max_pages + 1)))
        page = wave[-1] + 1
        with ThreadPoolExecutor(max_workers=config.max_concurrent_requests) as pool:
            futures = [pool.submit(_fetch_page, config, since, p) for p in wave]
        for p, future in zip(wave, futures):
            try:
                body = future.result()
            except CredentialError:
                raise
            except (ConnectionError, ValueError) as exc:
                result.errors.append(str(exc))
                continue
            if not body:
                stop = True
                break
            for i, obj in enumerate(body):
                source_id = str(obj.get("id") or f"page{p}#{i}")
                result.records.append(
                    RawRecord(
                        source_id=source_id,
                        payload=json.dumps(obj, ensure_ascii=False),
                        fetched_at=fetched_at,
                    )
                )
    return result


def _technique_id(entry) -> str:
    if isinstance(entry, dict):
        return str(entry.get("id", "")).strip()
    return str(entry).strip()


def parse_pulse_json(record: RawRecord) -> ThreatEvent:
    """Map one JSON pulse object to a ThreatEvent.

    Feed fields: id, created, name, description, targeted_countries,
    malware_families, industries, attack_ids, tags, adversary.  Only id
    and created are mandatory; canonical countries stay empty until the
    normalize stage.
    """
    try:
        data = json.loads(record.payload)
    except json.JSONDecodeError as exc:
        raise ParseError("json", f"payload is not JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError("json", "payload must be a JSON object")
    if not data.get("id"):
        raise ParseError("id")
    if not data.get("created"):
        raise ParseError("created")
    technique_ids = [t for t in map(_technique_id, data.get("attack_ids") or []) if t]
    return ThreatEvent.from_dict(
        {
            "id": data["id"],
            "created_at": data["created"],
            "title": data.get("name") or "",
            "description": data.get("description") or "",
            "countries": [],
            "raw_country_strings": data.get("targeted_countries") or [],
            "adversary": data.get("adversary") or None,
            "malware_families": data.get("malware_families") or [],
            "industries": data.get("industries") or [],
            "technique_ids": technique_ids,
            "tags": data.get("tags") or [],
        }
    )


_SCALAR_CLASSES = {
    "pulse-id": "id",
    "pulse-created": "created",
    "pulse-title": "title",
    "pulse-description": "description",
    "pulse-adversary": "adversary",
}
_LIST_CLASSES = {
    "pulse-countries": "targeted_countries",
    "pulse-malware": "malware_families",
    "pulse-industries": "industries",
    "pulse-techniques": "attack_ids",
    "pulse-tags": "tags",
}


def _squash_ws(text: str) -> str:
    return " ".join(text.split())


class _PulsePage(HTMLParser):
    """Extracts the documented fixture-template fields by CSS class."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.scalars: dict[str, str] = {}
        self.lists: dict[str, list[str]] = {}
        self._stack: list[tuple[str, str | None]] = []  # (tag, scalar field)
        self._scalar_buffer: list[str] | None = None
        self._scalar_field: str | None = None
        self._list_field: str | None = None
        self._list_container_depth = 0
        self._item_buffer: list[str] | None = None

    def handle_starttag(self, tag, attrs):
        classes = dict(attrs).get("class", "").split()
        scalar = next((_SCALAR_CLASSES[c] for c in classes if c in _SCALAR_CLASSES), None)
        listed = next((_LIST_CLASSES[c] for c in classes if c in _LIST_CLASSES), None)
        if scalar and self._scalar_buffer is None:
            self._scalar_field = scalar
            self._scalar_buffer = []
        if listed and self._list_field is None:
            self._list_field = listed
            self.lists.setdefault(listed, [])
            self._list_container_depth = len(self._stack)
        if tag == "li" and self._list_field and self._item_buffer is None:
            self._item_buffer = []
        self._stack.append((tag, scalar))

    def handle_data(self, data):
        if self._item_buffer is not None:
            self._item_buffer.append(data)
        elif self._scalar_buffer is not None:
            self._scalar_buffer.append(data)

    def handle_endtag(self, tag):
        while self._stack:
            open_tag, scalar = self._stack.pop()
            if tag == "li" and self._item_buffer is not None and open_tag == "li":
                item = _squash_ws("".join(self._item_buffer))
                if item:
                    self.lists[self._list_field].append(item)
                self._item_buffer = None
            if scalar and scalar == self._scalar_field:
                self.scalars[scalar] = _squash_ws("".join(self._scalar_buffer or []))
                self._scalar_buffer = None
                self._scalar_field = None
            if self._list_field and len(self._stack) == self._list_container_depth:
                self._list_field = None
            if open_tag == tag:
                break


def parse_pulse_html(record: RawRecord) -> ThreatEvent:
    """Extract a ThreatEvent from a fixture-template HTML page.

    Values are entity-decoded with whitespace squashed; id and created are
    mandatory, everything else defaults to empty.
    """
    page = _PulsePage()
    page.feed(record.payload)
    page.close()
    if not page.scalars.get("id"):
        raise ParseError("id")
    if not page.scalars.get("created"):
        raise ParseError("created")
    return ThreatEvent.from_dict(
        {
            "id": page.scalars["id"],
            "created_at": page.scalars["created"],
            "title": page.scalars.get("title", ""),
            "description": page.scalars.get("description", ""),
            "countries": [],
            "raw_country_strings": page.lists.get("targeted_countries", []),
            "adversary": page.scalars.get("adversary") or None,
            "malware_families": page.lists.get("malware_families", []),
            "industries": page.lists.get("industries", []),
            "technique_ids": page.lists.get("attack_ids", []),
            "tags": page.lists.get("tags", []),
        }
    )


def event_to_pulse_json(event: ThreatEvent) -> str:
    """Serialize an event back to the feed's pulse schema (round-trip aid)."""
    return json.dumps(
        {
            "id": event.id,
            "created": event.created_at.isoformat(),
            "name": event.title,
            "description": event.description,
            "targeted_countries": list(event.raw_country_strings),
            "adversary": event.adversary,
            "malware_families": list(event.malware_families),
            "industries": list(event.industries),
            "attack_ids": list(event.technique_ids),
            "tags": list(event.tags),
        },
        ensure_ascii=False,
    )
