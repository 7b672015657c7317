"""Tests for the round report endpoints."""

import httpx


class TestReportsRoute:
    """Tests for GET /reports and GET /reports/{round}."""

    async def test_list(self, client: httpx.AsyncClient) -> None:
        resp = await client.get("/reports")
        assert resp.status_code == 200
        data = resp.json()
        assert data["count"] == 2
        assert [r["task_id"] for r in data["reports"]] == ["task-1", "task-2"]
        assert data["last_updated"] is not None

    async def test_single_report(self, client: httpx.AsyncClient) -> None:
        data = (await client.get("/reports/1")).json()
        assert data["round"] == 1
        assert data["record_count"] == 8
        assert {p["pool_id"] for p in data["pools"]} == {
            "pool-honest",
            "pool-inflated",
        }

    async def test_report_not_found(self, client: httpx.AsyncClient) -> None:
        resp = await client.get("/reports/5")
        assert resp.status_code == 404
        assert resp.json()["detail"] == "No report for round 5"

    async def test_non_integer_round(self, client: httpx.AsyncClient) -> None:
        resp = await client.get("/reports/latest")
        assert resp.status_code == 422
