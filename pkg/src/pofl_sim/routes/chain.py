"""Chain export and block lookup endpoints."""

from fastapi import APIRouter, HTTPException

from pofl_sim.chain.state import validate_chain
from pofl_sim.dependencies import StoreDep
from pofl_sim.models import BlockView, ChainResponse

router = APIRouter()


@router.get("/chain", response_model=ChainResponse)
async def get_chain(store: StoreDep) -> ChainResponse:
    """Export every stored block header, genesis first."""
    snapshot = store.get_snapshot()
    return ChainResponse(
        height=snapshot.height,
        valid=validate_chain(snapshot.blocks),
        blocks=[BlockView.model_validate(b.to_dict()) for b in snapshot.blocks],
    )


@router.get("/blocks/{height}", response_model=BlockView)
async def get_block(store: StoreDep, height: int) -> BlockView:
    """Get a single block by height."""
    block = store.get_block(height)
    if block is None:
        raise HTTPException(status_code=404, detail=f"No block at height {height}")
    return BlockView.model_validate(block.to_dict())
