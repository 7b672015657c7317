"""Tests for the health endpoint."""

import httpx


class TestHealthRoute:
    """Tests for GET /health."""

    async def test_health_response_shape(self, client: httpx.AsyncClient) -> None:
        """Health endpoint returns expected fields."""
        resp = await client.get("/health")
        assert resp.status_code == 200
        data = resp.json()
        assert data["status"] == "healthy"
        assert "reports_loaded" in data
        assert "last_updated" in data
        assert "uptime_seconds" in data
        assert data["version"] == "1.0.0"

    async def test_health_counts(self, client: httpx.AsyncClient) -> None:
        """Health reports the stored rounds and chain height."""
        data = (await client.get("/health")).json()
        # two tasks, one block each
        assert data["reports_loaded"] == 2
        assert data["chain_height"] == 1
        assert data["chain_valid"] is True

    async def test_health_uptime(self, client: httpx.AsyncClient) -> None:
        """Uptime is a positive number."""
        data = (await client.get("/health")).json()
        assert data["uptime_seconds"] >= 0

    async def test_response_time_header(self, client: httpx.AsyncClient) -> None:
        resp = await client.get("/health")
        assert resp.headers["X-Response-Time"].endswith("ms")
